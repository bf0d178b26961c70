"""Processing-time benchmark over signal length."""
from __future__ import annotations

import csv
import gc
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import griffinlim as gl
from . import spectral as sp
from .gan import GeneratorNet, ModelBundle, NormStats, generator_forward, warm_start
from .synth import speech_like

METHODS = {"gl": "GriffinLim400", "neural": "Neural"}
CSV_FIELDS = ("signal_length", "method", "elapsed", "realtime_factor")


@dataclass(frozen=True)
class BenchRecord:
    signal_length: float  # seconds
    method: str           # "gl" or "neural"
    elapsed: float        # median wall-clock seconds
    realtime_factor: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.signal_length <= 0 or self.elapsed <= 0:
            raise ValueError("bench fields must be positive")


@dataclass(frozen=True)
class LinearFit:
    method: str
    slope: float
    intercept: float
    r2: float


def untrained_bundle(cfg: sp.StftConfig = sp.StftConfig(), seed: int = 0) -> ModelBundle:
    """Default-architecture generator with seeded random weights; timing does not depend on them."""
    G = GeneratorNet(cfg.n_bins, seed=seed)
    F = cfg.n_bins
    stats = NormStats(np.zeros((2, F)), np.ones((2, F)))
    return ModelBundle(G, None, stats, cfg)


MIN_RUN_SECONDS = 1.0


def _loop_count(fn, min_run: float) -> int:
    t0 = time.perf_counter()
    fn()
    once = time.perf_counter() - t0
    return max(1, int(np.ceil(min_run / max(once, 1e-9))))


def _interleaved_medians(fns: Sequence, repeats: int, min_run: float = MIN_RUN_SECONDS) -> List[float]:
    """Median per-call time of each function over ``repeats`` rounds.

    Every round times each function once, so slow stretches of a shared machine
    hit all cells of a round alike instead of bending one end of the curve. As with
    ``timeit.Timer.autorange``, a timed run loops its function until it lasts at
    least ``min_run`` seconds, and the collector is paused while timing.
    """
    enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        numbers = [_loop_count(fn, min_run) for fn in fns]  # doubles as the warm-up call
        times = [[] for _ in fns]
        for _ in range(repeats):
            for fn, number, acc in zip(fns, numbers, times):
                t0 = time.perf_counter()
                for _ in range(number):
                    fn()
                acc.append((time.perf_counter() - t0) / number)
    finally:
        if enabled:
            gc.enable()
    return [float(np.median(t)) for t in times]


def _bench_call(method: str, a, bundle: Optional[ModelBundle], gl_iters: int, seed: int):
    if method == "gl":
        opts = gl.GriffinLimOptions(max_iters=gl_iters, phase_init=gl.RandomUniform(seed), record_objective=False)
        return lambda: gl.reconstruct(a, opts)
    warm_iters = bundle.train_config.gl_warm_iters if bundle.train_config else 5

    def fn():
        warm = warm_start(a, seed, warm_iters)
        return sp.istft(generator_forward(bundle.generator, a, warm, bundle.stats))
    return fn


def run_bench(lengths: Sequence[float], methods: Sequence[str], bundle: Optional[ModelBundle] = None,
              gl_iters: int = 400, repeats: int = 5, seed: int = 0) -> List[BenchRecord]:
    """Median-of-``repeats`` timing per (length, method), rounds interleaved across cells."""
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
    if any(length <= 0 for length in lengths):
        raise ValueError("signal lengths must be positive")
    cfg = bundle.stft if bundle is not None else sp.StftConfig()
    if "neural" in methods and bundle is None:
        bundle = untrained_bundle(cfg, seed)
    cells, fns = [], []
    for length in lengths:
        rng = np.random.default_rng(seed)
        x = speech_like(rng, int(round(length * cfg.sample_rate)), cfg.sample_rate)
        a = sp.magnitude(sp.stft(sp.TimeSignal(x, cfg.sample_rate), cfg))
        for m in methods:
            cells.append((float(length), m))
            fns.append(_bench_call(m, a, bundle, gl_iters, seed))
    medians = _interleaved_medians(fns, repeats)
    return [BenchRecord(length, m, t, t / length) for (length, m), t in zip(cells, medians)]


def linear_fit(records: Sequence[BenchRecord]) -> Dict[str, LinearFit]:
    """Least-squares elapsed = slope * length + intercept per method, with R^2."""
    fits = {}
    for m in dict.fromkeys(r.method for r in records):
        pts = [(r.signal_length, r.elapsed) for r in records if r.method == m]
        if len(pts) < 2:
            continue
        x, y = np.array(pts).T
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss_tot = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
        fits[m] = LinearFit(m, float(slope), float(intercept), float(r2))
    return fits


def write_csv(records: Sequence[BenchRecord], path) -> None:
    """Header ``signal_length,method,elapsed,realtime_factor``; floats as %.6f."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([f"{r.signal_length:.6f}", r.method, f"{r.elapsed:.6f}", f"{r.realtime_factor:.6f}"])


def read_csv(path) -> List[BenchRecord]:
    with open(path, newline="") as fh:
        return [BenchRecord(float(row["signal_length"]), row["method"], float(row["elapsed"]),
                            float(row["realtime_factor"])) for row in csv.DictReader(fh)]


def fit_lines(fits: Dict[str, LinearFit]) -> str:
    """``method,slope,intercept,r2`` rows, floats as %.9g."""
    rows = ["method,slope,intercept,r2"]
    rows += [f"{f.method},{f.slope:.9g},{f.intercept:.9g},{f.r2:.9g}" for f in fits.values()]
    return "\n".join(rows) + "\n"
