"""On-disk formats: trained model bundles and raw spectrogram files.

Both share one layout: a single line of JSON describing the contents, then
little-endian float32 blobs in the order the header lists them.

Bundle header keys: ``format`` ("phaserecon-bundle/1"), ``stft``, ``generator``
(config, n_bins, layers), ``discriminator`` (config, n_frames, layers) or null,
``norm_stats`` (mean, std as nested lists of float64), ``train_config`` or null,
and ``tensors``: a list of ``{"name", "shape", "offset", "count"}`` where offset
counts bytes from the first byte after the header line.

Spectrogram header keys: ``format`` ("phaserecon-spec/1"), ``kind``
("magnitude" or "complex"), ``bins``, ``frames``, ``config``. A complex file
stores the real-part matrix followed by the imaginary-part matrix, each
row-major (bins x frames).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import spectral as sp
from .errors import IoFailure, UnsupportedFormat
from .gan import DiscriminatorConfig, DiscriminatorNet, GeneratorConfig, GeneratorNet, ModelBundle, NormStats, TrainConfig
from .layers import spec_from_dict

BUNDLE_FORMAT = "phaserecon-bundle/1"
SPEC_FORMAT = "phaserecon-spec/1"
LE_F32 = np.dtype("<f4")


def _write(path, header: dict, blobs) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            for b in blobs:
                fh.write(np.ascontiguousarray(b, dtype=LE_F32).tobytes())
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def _read(path, expected_format: str):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    cut = raw.find(b"\n")
    try:
        header = json.loads(raw[:cut])
    except (ValueError, UnicodeDecodeError) as exc:
        raise UnsupportedFormat(f"{path}: unreadable header") from exc
    if cut < 0 or not isinstance(header, dict) or header.get("format") != expected_format:
        raise UnsupportedFormat(f"{path}: not a {expected_format} file")
    return header, raw[cut + 1:]


def _blob(body: bytes, offset: int, count: int, shape, path) -> np.ndarray:
    end = offset + 4 * count
    if end > len(body):
        raise UnsupportedFormat(f"{path}: truncated data")
    return np.frombuffer(body[offset:end], dtype=LE_F32).reshape(shape).astype(np.float64)


# -- model bundles -----------------------------------------------------------

def _named_tensors(bundle: ModelBundle):
    out = [(f"generator/{n}", t.data) for n, t in bundle.generator.net.named_parameters()]
    if bundle.discriminator is not None:
        out += [(f"discriminator/{n}", t.data) for n, t in bundle.discriminator.net.named_parameters()]
    return out


def save_bundle(bundle: ModelBundle, path) -> None:
    tensors, offset = [], 0
    named = _named_tensors(bundle)
    for name, data in named:
        tensors.append({"name": name, "shape": list(data.shape), "offset": offset, "count": int(data.size)})
        offset += 4 * data.size
    G, D = bundle.generator, bundle.discriminator
    header = {
        "format": BUNDLE_FORMAT,
        "stft": bundle.stft.to_dict(),
        "generator": {"config": vars(G.config).copy(), "n_bins": G.n_bins, "layers": G.net.spec_dicts()},
        "discriminator": None if D is None else {
            "config": {**vars(D.config), "channels": list(D.config.channels)},
            "n_frames": D.n_frames,
            "layers": D.net.spec_dicts(),
        },
        "norm_stats": {"mean": bundle.stats.mean.tolist(), "std": bundle.stats.std.tolist()},
        "train_config": None if bundle.train_config is None else bundle.train_config.to_dict(),
        "tensors": tensors,
    }
    _write(path, header, [data for _, data in named])


def load_bundle(path) -> ModelBundle:
    """Parameters come back as float64 holding the stored float32 values."""
    header, body = _read(path, BUNDLE_FORMAT)
    try:
        stft = sp.StftConfig.from_dict(header["stft"])
        g = header["generator"]
        G = GeneratorNet(g["n_bins"], GeneratorConfig(**g["config"]),
                         layers=[spec_from_dict(d) for d in g["layers"]])
        D = None
        if header["discriminator"] is not None:
            d = header["discriminator"]
            D = DiscriminatorNet(stft, d["n_frames"], DiscriminatorConfig(**d["config"]))
        stats = NormStats(np.array(header["norm_stats"]["mean"]), np.array(header["norm_stats"]["std"]))
        tc = header["train_config"]
        train_config = None if tc is None else TrainConfig.from_dict(tc)
        params = {f"generator/{k}": v for k, v in G.net.named_parameters()}
        if D is not None:
            params.update({f"discriminator/{k}": v for k, v in D.net.named_parameters()})
        seen = set()
        for t in header["tensors"]:
            target = params.get(t["name"])
            if target is None or list(target.shape) != t["shape"]:
                raise UnsupportedFormat(f"{path}: tensor {t['name']} does not fit the stored architecture")
            target.data = _blob(body, t["offset"], t["count"], t["shape"], path)
            seen.add(t["name"])
        missing = set(params) - seen
        if missing:
            raise UnsupportedFormat(f"{path}: missing tensors {sorted(missing)}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, UnsupportedFormat):
            raise
        raise UnsupportedFormat(f"{path}: malformed bundle header ({exc})") from exc
    return ModelBundle(G, D, stats, stft, train_config)


# -- spectrogram files ---------------------------------------------------------

def save_spectrogram(spec, path) -> None:
    """Write a MagnitudeSpectrogram or ComplexSpectrogram."""
    complex_ = isinstance(spec, sp.ComplexSpectrogram)
    v = spec.values
    header = {"format": SPEC_FORMAT, "kind": "complex" if complex_ else "magnitude",
              "bins": int(v.shape[0]), "frames": int(v.shape[1]), "config": spec.config.to_dict()}
    _write(path, header, [v.real, v.imag] if complex_ else [v])


def load_spectrogram(path):
    header, body = _read(path, SPEC_FORMAT)
    try:
        cfg = sp.StftConfig.from_dict(header["config"])
        shape = (int(header["bins"]), int(header["frames"]))
        kind = header["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise UnsupportedFormat(f"{path}: malformed header ({exc})") from exc
    n = shape[0] * shape[1]
    if kind == "magnitude":
        return sp.MagnitudeSpectrogram(_blob(body, 0, n, shape, path), cfg)
    if kind == "complex":
        re, im = _blob(body, 0, n, shape, path), _blob(body, 4 * n, n, shape, path)
        return sp.ComplexSpectrogram(re + 1j * im, cfg)
    raise UnsupportedFormat(f"{path}: unknown spectrogram kind {kind!r}")
