"""STFT analysis/synthesis pair, consistency projection, polar decomposition.

Spectrograms are stored as the non-redundant half spectrum, ``fft_size // 2 + 1``
bins by ``N`` frames. Frames lie fully inside the signal (no edge padding), so
frame ``n`` covers samples ``[n * hop, n * hop + win_len)``.

The array-level helpers (``stft_array``, ``istft_array``, ``project_array``)
accept arbitrary leading batch dimensions and are what the iterative and
training code paths call; the typed wrappers validate and carry the config.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import DegenerateWindowSum, ShapeMismatch, SignalTooShort

WINDOW_FLOOR = 1e-10


class WindowKind(str, Enum):
    BLACKMAN = "blackman"
    HANN = "hann"
    RECTANGULAR = "rectangular"


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters. Defaults: 16 kHz, 64 ms Blackman window, 32 ms hop."""

    sample_rate: int = 16000
    win_len: int = 1024
    hop: int = 512
    window_kind: WindowKind = WindowKind.BLACKMAN
    fft_size: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "window_kind", WindowKind(self.window_kind))
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.win_len <= 0 or self.win_len % 2:
            raise ValueError("win_len must be a positive even integer")
        if not 0 < self.hop <= self.win_len:
            raise ValueError("hop must satisfy 0 < hop <= win_len")
        if self.fft_size < self.win_len:
            raise ValueError("fft_size must be >= win_len")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.win_len) // self.hop + 1

    def signal_length(self, n_frames: int) -> int:
        return (n_frames - 1) * self.hop + self.win_len

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "win_len": self.win_len,
            "hop": self.hop,
            "window_kind": self.window_kind.value,
            "fft_size": self.fft_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StftConfig":
        return cls(**d)


@dataclass(frozen=True)
class TimeSignal:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ShapeMismatch(f"signal must be 1-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("signal contains non-finite samples")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def _check_grid(values, config, *, dtype, name):
    v = np.asarray(values, dtype=dtype)
    if v.ndim != 2 or v.shape[0] != config.n_bins or v.shape[1] < 1:
        raise ShapeMismatch(f"{name} must have shape ({config.n_bins}, N), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class ComplexSpectrogram:
    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_grid(self.values, self.config, dtype=np.complex128, name="spectrogram")
        )

    @property
    def shape(self):
        return self.values.shape

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        v = _check_grid(self.values, self.config, dtype=np.float64, name="magnitude")
        if np.any(v < 0):
            raise ValueError("magnitude must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class PhaseSpectrogram:
    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        v = _check_grid(self.values, self.config, dtype=np.complex128, name="phase")
        if np.any(np.abs(np.abs(v) - 1.0) > 1e-12):
            raise ValueError("phase values must have unit modulus")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def make_window(cfg: StftConfig) -> np.ndarray:
    """Symmetric window of ``cfg.win_len`` points (a fresh array)."""
    return _window(cfg).copy()


@lru_cache(maxsize=32)
def _window(cfg: StftConfig) -> np.ndarray:
    n = cfg.win_len
    t = np.arange(n)
    if cfg.window_kind is WindowKind.RECTANGULAR:
        return np.ones(n)
    arg = 2.0 * np.pi * t / (n - 1)
    if cfg.window_kind is WindowKind.HANN:
        return 0.5 - 0.5 * np.cos(arg)
    return 0.42 - 0.5 * np.cos(arg) + 0.08 * np.cos(2.0 * arg)


def window_sum(cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Overlap-added squared window over ``n_frames`` frames."""
    w2 = make_window(cfg) ** 2
    out = np.zeros(cfg.signal_length(n_frames))
    for n in range(n_frames):
        out[n * cfg.hop:n * cfg.hop + cfg.win_len] += w2
    return out


def interior_slice(cfg: StftConfig, n_samples: int) -> slice:
    return slice(cfg.win_len, max(cfg.win_len, n_samples - cfg.win_len))


# -- array level ------------------------------------------------------------

def stft_array(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """(..., T) real -> (..., F', N) complex."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < cfg.win_len:
        raise SignalTooShort(f"signal of {x.shape[-1]} samples is shorter than win_len={cfg.win_len}")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.win_len, axis=-1)[..., ::cfg.hop, :]
    spec = np.fft.rfft(frames * _window(cfg), n=cfg.fft_size, axis=-1)
    return np.swapaxes(spec, -1, -2)


def synthesis_weights(cfg: StftConfig, n_frames: int, edge_floor: float = 0.0) -> np.ndarray:
    """Pointwise 1/(overlap-added squared window), zero where that sum is below the floor.

    ``edge_floor`` is relative to the largest window sum and only ever zeroes more
    samples at the outer edges; the absolute ``WINDOW_FLOOR`` always applies.
    """
    return _synthesis_weights(cfg, n_frames, float(edge_floor)).copy()


@lru_cache(maxsize=64)
def _synthesis_weights(cfg: StftConfig, n_frames: int, edge_floor: float) -> np.ndarray:
    wsum = window_sum(cfg, n_frames)
    inner = interior_slice(cfg, wsum.shape[0])
    if np.any(wsum[inner] < WINDOW_FLOOR):
        raise DegenerateWindowSum(
            "squared-window overlap-add vanishes inside the signal; synthesis is undefined"
        )
    inv = np.zeros_like(wsum)
    ok = wsum >= max(WINDOW_FLOOR, edge_floor * wsum.max())
    inv[ok] = 1.0 / wsum[ok]
    inv.flags.writeable = False
    return inv


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """(..., N, L) frames -> (..., (N-1)*hop + L) summed signal."""
    n_frames, length = frames.shape[-2:]
    out = np.zeros(frames.shape[:-2] + ((n_frames - 1) * hop + length,))
    for n in range(n_frames):
        out[..., n * hop:n * hop + length] += frames[..., n, :]
    return out


def istft_array(c: np.ndarray, cfg: StftConfig, edge_floor: float = 0.0) -> np.ndarray:
    """(..., F', N) complex -> (..., (N-1)*hop + win_len) real least-squares synthesis.

    Samples where the squared-window sum is below ``WINDOW_FLOOR`` (only possible
    at the outer edges) are set to zero, i.e. the signal model excludes them and
    stft(istft(.)) stays an exact orthogonal projection. A larger relative
    ``edge_floor`` trades that exactness for bounded gain at tapered edges.
    """
    c = np.asarray(c)
    if c.shape[-2] != cfg.n_bins:
        raise ShapeMismatch(f"expected {cfg.n_bins} bins, got {c.shape[-2]}")
    n_frames = c.shape[-1]
    frames = np.fft.irfft(np.swapaxes(c, -1, -2), n=cfg.fft_size, axis=-1)[..., :cfg.win_len]
    x = overlap_add(frames * _window(cfg), cfg.hop)
    x *= _synthesis_weights(cfg, n_frames, float(edge_floor))
    return x


def project_array(c: np.ndarray, cfg: StftConfig) -> np.ndarray:
    return stft_array(istft_array(c, cfg), cfg)


def bin_weights(cfg: StftConfig) -> np.ndarray:
    """Per-bin weights making half-spectrum norms equal full-spectrum norms."""
    w = np.full(cfg.n_bins, 2.0)
    w[0] = 1.0
    if cfg.fft_size % 2 == 0:
        w[-1] = 1.0
    return w


def weighted_sqnorm(c: np.ndarray, cfg: StftConfig) -> float:
    return float(np.sum(bin_weights(cfg)[:, None] * (c.real ** 2 + c.imag ** 2)))


def phase_array(c: np.ndarray) -> np.ndarray:
    mag = np.abs(c)
    return np.divide(c, mag, out=np.ones(c.shape, dtype=np.complex128), where=mag > 0)


# -- typed API --------------------------------------------------------------

def _check_rate(x: TimeSignal, cfg: StftConfig):
    if x.sample_rate != cfg.sample_rate:
        raise ShapeMismatch(f"signal rate {x.sample_rate} Hz does not match config {cfg.sample_rate} Hz")


def stft(x: TimeSignal, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    _check_rate(x, cfg)
    return ComplexSpectrogram(stft_array(x.samples, cfg), cfg)


def istft(c: ComplexSpectrogram, cfg: StftConfig | None = None, edge_floor: float = 0.0) -> TimeSignal:
    cfg = cfg or c.config
    return TimeSignal(istft_array(c.values, cfg, edge_floor), cfg.sample_rate)


def project_consistent(c: ComplexSpectrogram) -> ComplexSpectrogram:
    """Orthogonal projection onto the set of spectrograms of real signals."""
    return ComplexSpectrogram(project_array(c.values, c.config), c.config)


def magnitude(c: ComplexSpectrogram) -> MagnitudeSpectrogram:
    return MagnitudeSpectrogram(np.abs(c.values), c.config)


def phase(c: ComplexSpectrogram) -> PhaseSpectrogram:
    """Unit-modulus phase, with the angle of zero taken as ``1+0j``."""
    return PhaseSpectrogram(phase_array(c.values), c.config)


def combine(a: MagnitudeSpectrogram, phi: PhaseSpectrogram) -> ComplexSpectrogram:
    if a.shape != phi.shape:
        raise ShapeMismatch(f"magnitude {a.shape} and phase {phi.shape} differ")
    return ComplexSpectrogram(a.values * phi.values, a.config)


def consistency_residual(c: ComplexSpectrogram) -> float:
    """Squared distance from ``c`` to its consistent projection (full-spectrum norm)."""
    return weighted_sqnorm(c.values - project_array(c.values, c.config), c.config)
