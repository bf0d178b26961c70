"""Synthetic test signals: sinusoid mixtures and a crude voiced-speech stand-in."""
import numpy as np


def sinusoid_mix(rng, n_samples, sample_rate=16000, n_components=(2, 3),
                 freq_range=(100.0, 4000.0), amp_range=(0.1, 0.4)):
    """Sum of a random number of sinusoids with random frequencies, amplitudes and phases."""
    k = int(rng.integers(n_components[0], n_components[1] + 1))
    t = np.arange(n_samples) / sample_rate
    x = np.zeros(n_samples)
    for _ in range(k):
        f = rng.uniform(*freq_range)
        amp = rng.uniform(*amp_range)
        x += amp * np.cos(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x


def sinusoid_corpus(n_items, seed, n_samples=16000, sample_rate=16000):
    rng = np.random.default_rng(seed)
    return [sinusoid_mix(rng, n_samples, sample_rate) for _ in range(n_items)]


def speech_like(rng, n_samples, sample_rate=16000):
    """Harmonic source with a wandering pitch, formant-ish spectral tilt and syllabic envelope."""
    t = np.arange(n_samples) / sample_rate
    f0 = rng.uniform(90, 220) * (1 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t))
    inst_phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    x = np.zeros(n_samples)
    formants = rng.uniform([400, 1200, 2400], [900, 2000, 3200])
    for h in range(1, 30):
        fh = h * f0.mean()
        if fh > sample_rate / 2 - 200:
            break
        gain = sum(np.exp(-0.5 * ((fh - fm) / 150.0) ** 2) for fm in formants) + 0.05 / h
        x += gain * np.cos(h * inst_phase + rng.uniform(0, 2 * np.pi))
    env = 0.5 * (1 - np.cos(2 * np.pi * rng.uniform(2, 5) * t)) + 0.05
    x = x * env + 0.01 * rng.standard_normal(n_samples)
    return 0.5 * x / (np.max(np.abs(x)) + 1e-12)
