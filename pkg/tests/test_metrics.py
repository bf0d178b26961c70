import numpy as np
import pytest

from phaserecon import griffinlim as gl
from phaserecon import spectral as sp
from phaserecon.metrics import MetricsReport, snr_db, spectral_convergence
from phaserecon.synth import speech_like

CFG = sp.StftConfig()


def test_spectral_convergence_zero_for_exact_signal():
    x = speech_like(np.random.default_rng(0), 16000)
    assert spectral_convergence(np.abs(sp.stft_array(x, CFG)), x, CFG) == pytest.approx(0.0, abs=1e-12)


def test_spectral_convergence_silent_estimate_is_one():
    x = speech_like(np.random.default_rng(1), 16000)
    assert spectral_convergence(np.abs(sp.stft_array(x, CFG)), np.zeros_like(x), CFG) == 1.0


def test_spectral_convergence_scale():
    x = speech_like(np.random.default_rng(2), 16000)
    a = np.abs(sp.stft_array(x, CFG))
    assert spectral_convergence(a, 1.5 * x, CFG) == pytest.approx(0.5, rel=1e-12)


def test_spectral_convergence_all_zero():
    z = np.zeros(4096)
    a = np.zeros((CFG.n_bins, CFG.n_frames(4096)))
    assert spectral_convergence(a, z, CFG) == 0.0
    assert spectral_convergence(a, z + 1.0, CFG) == float("inf")


def test_snr_examples():
    ref = np.array([1.0, -1.0, 1.0, -1.0])
    assert snr_db(ref, 0.9 * ref) == pytest.approx(20.0)
    assert snr_db(ref, ref) == float("inf")
    assert snr_db(np.zeros(3), np.ones(3)) == float("-inf")


def test_report_text_layout():
    r = MetricsReport(consistency_residual=1.5, spectral_convergence=0.125, elapsed=2.0)
    assert r.to_text() == "consistency_residual=1.5\nspectral_convergence=0.125\nsnr_db=none\nelapsed=2\n"


def test_report_round_trip():
    r = MetricsReport(211.931204, 0.0272864108, 0.75, -2.54398547)
    assert MetricsReport.from_text(r.to_text()) == r


def test_gl_spectral_convergence_improves_with_iterations():
    """Median SC over ten speech-like magnitudes is non-increasing from 5 to 50 to 400 iterations."""
    medians = []
    for iters in (5, 50, 400):
        scs = []
        for seed in range(10):
            x = speech_like(np.random.default_rng(seed), 16000)
            a = sp.magnitude(sp.stft(sp.TimeSignal(x), CFG))
            rep = gl.reconstruct(a, gl.GriffinLimOptions(max_iters=iters, phase_init=gl.RandomUniform(seed),
                                                          record_objective=False))
            scs.append(spectral_convergence(a.values, rep.final_signal.samples, CFG))
        medians.append(float(np.median(scs)))
    assert medians[1] <= medians[0] + 1e-9
    assert medians[2] <= medians[1] + 1e-9
