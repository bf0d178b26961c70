"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numerical failure.
Set PHASERECON_LOG (DEBUG, INFO, WARNING, ...) to control log verbosity on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import audio
from . import bench as benchmod
from . import bundle as bundlemod
from . import gan
from . import griffinlim as gl
from . import spectral as sp
from .errors import DataError, IoFailure, ReconError, UnsupportedFormat
from .metrics import MetricsReport, snr_db, spectral_convergence

log = logging.getLogger("phaserecon")
LOG_ENV = "PHASERECON_LOG"

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
# Output waveforms drop edge samples whose squared-window sum is below this
# fraction of its peak. Least-squares synthesis of an inconsistent spectrogram
# divides by that sum, so under a tapered window the outermost samples of a
# Griffin-Lim or generator output would otherwise be amplified into clicks.
OUTPUT_EDGE_FLOOR = 1e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _stft_args(p):
    d = sp.StftConfig()
    p.add_argument("--win-len", type=int, default=d.win_len)
    p.add_argument("--hop", type=int, default=d.hop)
    p.add_argument("--fft-size", type=int, default=d.fft_size)
    p.add_argument("--window", choices=[k.value for k in sp.WindowKind], default=d.window_kind.value)


def _stft_config(args, sample_rate):
    return sp.StftConfig(sample_rate=sample_rate, win_len=args.win_len, hop=args.hop,
                         window_kind=args.window, fft_size=args.fft_size)


def _is_wav(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == b"RIFF"
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


# -- commands ------------------------------------------------------------------

def reconstruct_signal(a: sp.MagnitudeSpectrogram, method: str, iters=None, seed: int = 0, bundle=None):
    """Returns ``(c_hat, signal, elapsed_seconds)``; ``iters`` defaults to 400 for GL."""
    t0 = time.perf_counter()
    if method == "gl":
        opts = gl.GriffinLimOptions(max_iters=400 if iters is None else iters, phase_init=gl.RandomUniform(seed),
                                    record_objective=False)
        report = gl.reconstruct(a, opts)
        c_hat, y = report.final_spectrogram, report.final_signal
    elif method == "neural":
        c_hat, y, _ = gan.reconstruct_neural(bundle, a, seed=seed, warm_iters=iters)
    else:
        raise UsageError(f"unknown method {method!r}")
    return c_hat, y, time.perf_counter() - t0


def cmd_reconstruct(args) -> int:
    reference = None
    bundle = None
    if args.method == "neural":
        if not args.model:
            raise UsageError("--method neural needs --model")
        bundle = bundlemod.load_bundle(args.model)
    if _is_wav(args.input):
        x = audio.read_wav(args.input)
        cfg = bundle.stft if bundle else _stft_config(args, x.sample_rate)
        if x.sample_rate != cfg.sample_rate:
            x = audio.resample(x, cfg.sample_rate)
        reference = x.samples
        a = sp.magnitude(sp.stft(x, cfg))
    else:
        spec = bundlemod.load_spectrogram(args.input)
        a = spec if isinstance(spec, sp.MagnitudeSpectrogram) else sp.magnitude(spec)
        cfg = a.config
        if bundle is not None and cfg != bundle.stft:
            raise UnsupportedFormat("magnitude file framing differs from the model's STFT configuration")

    c_hat, _, elapsed = reconstruct_signal(a, args.method, args.iters, args.seed, bundle)
    y = sp.istft(c_hat, edge_floor=OUTPUT_EDGE_FLOOR).samples
    if reference is not None and len(reference) > len(y):
        y = np.concatenate([y, np.zeros(len(reference) - len(y))])
    y = sp.TimeSignal(y, cfg.sample_rate)
    audio.write_wav(args.output, y)
    metrics = MetricsReport(
        consistency_residual=sp.consistency_residual(c_hat),
        spectral_convergence=spectral_convergence(a.values, y.samples, cfg),
        elapsed=elapsed,
        snr_db=None if reference is None else snr_db(reference, y.samples),
    )
    sys.stdout.write(metrics.to_text())
    if args.plot:
        from .plots import plot_reconstruction
        plot_reconstruction(a.values, np.abs(sp.stft_array(y.samples, cfg)), cfg.sample_rate, cfg.hop, args.plot)
    return 0


def cmd_train(args) -> int:
    manifest = audio.DatasetManifest.load(args.manifest)
    try:
        overrides = json.loads(Path(args.config).read_text()) if args.config else {}
    except OSError as exc:
        raise IoFailure(f"{args.config}: {exc}") from exc
    except ValueError as exc:
        raise UnsupportedFormat(f"{args.config}: not valid JSON ({exc})") from exc
    try:
        cfg = gan.TrainConfig.from_dict(overrides)
    except TypeError as exc:
        raise UsageError(f"bad training config: {exc}") from exc
    segments = audio.load_segments(manifest, "train", cfg.stft.sample_rate)
    log.info("training on %d segments", len(segments))
    bundle, loss_log = gan.train([s.samples for s in segments], cfg)

    out = Path(args.out)
    tmp = out.with_name(out.name + ".partial")
    bundlemod.save_bundle(bundle, tmp)
    os.replace(tmp, out)
    loss_path = Path(args.loss_csv) if args.loss_csv else out.with_suffix(".loss.csv")
    loss_path.write_text(gan.loss_csv_text(loss_log))
    if args.plot:
        from .plots import plot_losses
        plot_losses(loss_log, args.plot)
    last = loss_log[-1]
    print(f"steps={len(loss_log)} V={last['V']:.9g} U={last['U']:.9g} I={last['I']:.9g} G_total={last['G_total']:.9g}")
    return 0


def cmd_bench(args) -> int:
    try:
        lengths = [float(v) for v in args.lengths.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--lengths must be comma-separated seconds: {exc}") from exc
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not lengths or not methods:
        raise UsageError("need at least one length and one method")
    if any(m not in benchmod.METHODS for m in methods):
        raise UsageError(f"methods must be among {sorted(benchmod.METHODS)}")
    if any(not 0 < v <= 6 for v in lengths):
        raise UsageError("lengths must lie in (0, 6] seconds")
    bundle = bundlemod.load_bundle(args.model) if args.model else None
    records = benchmod.run_bench(lengths, methods, bundle, gl_iters=args.iters, repeats=args.repeats, seed=args.seed)
    benchmod.write_csv(records, args.csv)
    fits = benchmod.linear_fit(records)
    sys.stdout.write(benchmod.fit_lines(fits))
    if args.plot:
        from .plots import plot_bench
        plot_bench(records, fits, args.plot)
    return 0


def cmd_stft(args) -> int:
    x = audio.read_wav(args.input)
    c = sp.stft(x, _stft_config(args, x.sample_rate))
    bundlemod.save_spectrogram(sp.magnitude(c) if args.magnitude else c, args.output)
    return 0


def cmd_istft(args) -> int:
    spec = bundlemod.load_spectrogram(args.input)
    if isinstance(spec, sp.MagnitudeSpectrogram):
        raise UnsupportedFormat("istft needs a complex spectrogram; use 'reconstruct' for magnitudes")
    audio.write_wav(args.output, sp.istft(spec))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phaserecon", description="Phase reconstruction from STFT magnitudes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("reconstruct", help="rebuild a waveform from a magnitude (WAV or spectrogram file)")
    r.add_argument("--method", choices=["gl", "neural"], default="gl")
    r.add_argument("--iters", type=int, default=None,
                   help="Griffin-Lim iterations (default 400) or warm-start iterations for neural")
    r.add_argument("--model", help="model bundle for --method neural")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--plot", help="write a spectrogram comparison figure here")
    _stft_args(r)
    r.add_argument("input")
    r.add_argument("output")
    r.set_defaults(func=cmd_reconstruct)

    t = sub.add_parser("train", help="adversarial training from a dataset manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config", help="JSON file of training settings")
    t.add_argument("--out", required=True, help="model bundle path")
    t.add_argument("--loss-csv", help="per-step loss log (default: <out>.loss.csv)")
    t.add_argument("--plot", help="write a loss-curve figure here")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="time reconstruction against signal length")
    b.add_argument("--lengths", default="1,2,3,4,5")
    b.add_argument("--methods", default="gl,neural")
    b.add_argument("--csv", required=True)
    b.add_argument("--model", help="bundle for the neural method (default: untrained generator)")
    b.add_argument("--iters", type=int, default=400)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--plot", help="write an elapsed-vs-length figure here")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("stft", help="WAV -> spectrogram file")
    s.add_argument("--magnitude", action="store_true", help="store |STFT| only")
    _stft_args(s)
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_stft)

    i = sub.add_parser("istft", help="complex spectrogram file -> WAV")
    i.add_argument("input")
    i.add_argument("output")
    i.set_defaults(func=cmd_istft)
    return p


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ReconError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
