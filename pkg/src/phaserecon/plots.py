"""Report figures, rendered off-screen straight to image files."""
from __future__ import annotations

from typing import Dict, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.tight_layout()
    fig.savefig(path, dpi=100)


def plot_bench(records, fits: Dict = None, path="bench.png") -> None:
    """Elapsed time against signal length per method, with the fitted lines."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(1, 1, 1)
    for m in dict.fromkeys(r.method for r in records):
        pts = sorted((r.signal_length, r.elapsed) for r in records if r.method == m)
        x, y = np.array(pts).T
        ax.plot(x, y, "o", label=m)
        f = (fits or {}).get(m)
        if f is not None:
            xs = np.linspace(0, x.max(), 50)
            ax.plot(xs, f.slope * xs + f.intercept, "--", lw=1, label=f"{m} fit (R²={f.r2:.3f})")
    ax.set_xlabel("signal length [s]")
    ax.set_ylabel("elapsed [s]")
    ax.set_xlim(left=0)
    ax.legend()
    _save(fig, path)


def plot_losses(loss_log: Sequence[dict], path="losses.png") -> None:
    """Discriminator, deception and feature-matching terms per step (log scale)."""
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot(1, 1, 1)
    steps = [row["step"] for row in loss_log]
    for key in ("V", "U", "I"):
        vals = np.array([row[key] for row in loss_log], dtype=float)
        ax.plot(steps, np.maximum(vals, 1e-12), label=key, lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    _save(fig, path)


def plot_reconstruction(target: np.ndarray, result: np.ndarray, sample_rate: int, hop: int,
                        path="reconstruction.png", floor_db: float = -80.0) -> None:
    """Target and reconstructed magnitudes in dB (relative to the target's peak), and their difference."""
    ref = max(float(np.max(target)), 1e-12)
    db = lambda m: np.maximum(20 * np.log10(np.maximum(m, 1e-12) / ref), floor_db)
    n = min(target.shape[1], result.shape[1])
    t_db, r_db = db(target[:, :n]), db(result[:, :n])
    extent = (0, n * hop / sample_rate, 0, sample_rate / 2000)
    fig = Figure(figsize=(10, 3.2))
    titles = ("target |STFT| [dB]", "reconstruction |STFT| [dB]", "difference [dB]")
    for i, (img, title) in enumerate(zip((t_db, r_db, r_db - t_db), titles)):
        ax = fig.add_subplot(1, 3, i + 1)
        im = ax.imshow(img, origin="lower", aspect="auto", extent=extent,
                       cmap="RdBu_r" if i == 2 else "magma")
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("time [s]")
        if i == 0:
            ax.set_ylabel("frequency [kHz]")
        fig.colorbar(im, ax=ax)
    _save(fig, path)
