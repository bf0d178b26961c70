"""Reconstruction quality measures."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import spectral as sp


def spectral_convergence(a: np.ndarray, x_hat: np.ndarray, cfg: sp.StftConfig) -> float:
    """||a - |STFT(x_hat)||| / ||a|| over the frames both share (0 when a is all zero and so is x_hat)."""
    a = np.asarray(a)
    mag = np.abs(sp.stft_array(x_hat, cfg))
    n = min(a.shape[-1], mag.shape[-1])
    num = np.linalg.norm(a[..., :n] - mag[..., :n])
    den = np.linalg.norm(a[..., :n])
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / den)


def snr_db(reference: np.ndarray, estimate: np.ndarray) -> float:
    n = min(len(reference), len(estimate))
    ref, est = np.asarray(reference[:n]), np.asarray(estimate[:n])
    noise = np.sum((ref - est) ** 2)
    signal = np.sum(ref ** 2)
    if noise == 0:
        return float("inf")
    if signal == 0:
        return float("-inf")
    return float(10 * np.log10(signal / noise))


@dataclass
class MetricsReport:
    consistency_residual: float
    spectral_convergence: float
    elapsed: float
    snr_db: Optional[float] = None

    FIELDS = ("consistency_residual", "spectral_convergence", "snr_db", "elapsed")

    def to_text(self) -> str:
        """``key=value`` lines in a fixed order; floats use repr-exact ``%.9g``."""
        lines = []
        for k in self.FIELDS:
            v = getattr(self, k)
            lines.append(f"{k}={'none' if v is None else format(v, '.9g')}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        parse = lambda s: None if s == "none" else float(s)
        return cls(**{k: parse(kv[k]) for k in cls.FIELDS})
