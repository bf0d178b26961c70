"""Griffin-Lim phase reconstruction as majorization-minimization.

The objective is the squared distance between ``a * phi`` and its projection
onto the consistent set. Each step projects (inverse STFT followed by STFT)
and then replaces the phase with that of the projection, which minimizes the
majorizer in each block of variables in turn, so the objective never increases.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import spectral as sp
from .errors import ShapeMismatch
from .spectral import (
    ComplexSpectrogram,
    MagnitudeSpectrogram,
    PhaseSpectrogram,
    TimeSignal,
)


@dataclass(frozen=True)
class ZeroPhase:
    pass


@dataclass(frozen=True)
class RandomUniform:
    seed: int = 0


@dataclass(frozen=True)
class Provided:
    phase: PhaseSpectrogram


PhaseInit = Union[ZeroPhase, RandomUniform, Provided]


@dataclass(frozen=True)
class GriffinLimOptions:
    max_iters: int = 400
    stop_tol: float = 0.0
    phase_init: PhaseInit = RandomUniform(0)
    record_objective: bool = True

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be >= 0")


@dataclass
class GriffinLimReport:
    """Outcome of :func:`reconstruct`.

    ``objective_trace[k]`` is the objective at the k-th phase estimate, starting
    with the initial phase, so it has ``iterations_run + 1`` entries when
    recorded. ``final_spectrogram`` is ``a * phi`` for the last phase estimate
    and ``auxiliary`` is the last consistent projection (``None`` if no step ran).
    """

    objective_trace: list
    iterations_run: int
    final_spectrogram: ComplexSpectrogram
    final_signal: TimeSignal
    auxiliary: Optional[ComplexSpectrogram] = None


def initial_phase(init: PhaseInit, shape, cfg: sp.StftConfig) -> np.ndarray:
    if isinstance(init, ZeroPhase):
        return np.ones(shape, dtype=np.complex128)
    if isinstance(init, RandomUniform):
        rng = np.random.default_rng(init.seed)
        return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=shape))
    if isinstance(init, Provided):
        if init.phase.shape != tuple(shape):
            raise ShapeMismatch(f"provided phase {init.phase.shape} does not match {tuple(shape)}")
        return init.phase.values
    raise TypeError(f"unknown phase init {init!r}")


def objective(a: MagnitudeSpectrogram, phi: PhaseSpectrogram) -> float:
    return sp.consistency_residual(sp.combine(a, phi))


def gl_step(a: MagnitudeSpectrogram, phi: PhaseSpectrogram):
    """One MM update. Returns ``(new_phase, projection)``."""
    c_tilde = sp.project_consistent(sp.combine(a, phi))
    return sp.phase(c_tilde), c_tilde


def run_array(a: np.ndarray, phi: np.ndarray, n_iters: int, cfg: sp.StftConfig,
              stop_tol: float = 0.0, record: bool = True):
    """Array-level loop shared by :func:`reconstruct` and batched warm starts.

    Works on ``(..., F', N)`` stacks. Returns ``(phi, c_tilde, trace, iters)``
    where trace entries are summed over any leading dimensions.
    """
    w = sp.bin_weights(cfg)[:, None]
    trace = []
    c_tilde = None
    k = 0
    prev = None
    stopped = False
    while k < n_iters:
        c = a * phi
        c_tilde = sp.project_array(c, cfg)
        if record or stop_tol > 0:
            # objective of the current phase, obtained from the projection we need anyway
            diff = c - c_tilde
            j = float(np.sum(w * (diff.real ** 2 + diff.imag ** 2)))
            trace.append(j)
            if stop_tol > 0 and prev is not None and prev > 0 and (prev - j) / prev < stop_tol:
                stopped = True
                break
            prev = j
        phi = sp.phase_array(c_tilde)
        k += 1
    if record and not stopped:
        c = a * phi
        diff = c - sp.project_array(c, cfg)
        trace.append(float(np.sum(w * (diff.real ** 2 + diff.imag ** 2))))
    return phi, c_tilde, trace, k


def reconstruct(a: MagnitudeSpectrogram, opts: GriffinLimOptions = GriffinLimOptions()) -> GriffinLimReport:
    cfg = a.config
    phi0 = initial_phase(opts.phase_init, a.shape, cfg)
    phi, c_tilde, trace, iters = run_array(
        a.values, phi0, opts.max_iters, cfg, stop_tol=opts.stop_tol, record=opts.record_objective
    )
    final = ComplexSpectrogram(a.values * phi, cfg)
    return GriffinLimReport(
        objective_trace=trace,
        iterations_run=iters,
        final_spectrogram=final,
        final_signal=sp.istft(final),
        auxiliary=None if c_tilde is None else ComplexSpectrogram(c_tilde, cfg),
    )
