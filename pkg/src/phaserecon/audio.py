"""WAV files, resampling, one-second segmentation and dataset manifests."""
from __future__ import annotations

import math
import os
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
from scipy.signal import firwin, resample_poly

from .errors import IoFailure, ShapeMismatch, SignalEmpty, UnsupportedFormat
from .spectral import TimeSignal

PCM_SCALE = 32768.0
SEGMENT_LENGTH = 16000
SEGMENT_HOP = 8000
KAISER_BETA = 8.6
SPLITS = ("train", "eval")


# -- WAV ---------------------------------------------------------------------

def read_wav(path) -> TimeSignal:
    """16-bit PCM mono WAV -> samples in [-1, 1)."""
    try:
        with wave.open(os.fspath(path), "rb") as w:
            channels, width, rate, n = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            raw = w.readframes(n)
    except wave.Error as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    except (OSError, EOFError) as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels; only mono is accepted")
    if width != 2:
        raise UnsupportedFormat(f"{path}: {8 * width}-bit samples; only 16-bit PCM is accepted")
    pcm = np.frombuffer(raw, dtype="<i2")
    return TimeSignal(pcm.astype(np.float64) / PCM_SCALE, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Scale by 32768, round half to even and saturate to the int16 range."""
    return np.clip(np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE), -32768, 32767).astype("<i2")


def write_wav(path, x: TimeSignal) -> None:
    try:
        with wave.open(os.fspath(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(int(x.sample_rate))
            w.writeframes(to_pcm16(x.samples).tobytes())
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


# -- resampling ------------------------------------------------------------------

def _polyphase_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc low-pass at the lower Nyquist rate.

    Each polyphase branch is rescaled to sum to exactly 1/up, so a constant
    input gives a constant output for every output phase.
    """
    rate = max(up, down)
    h = firwin(20 * rate + 1, 1.0 / rate, window=("kaiser", KAISER_BETA))
    for p in range(up):
        h[p::up] /= up * h[p::up].sum()
    return h


def resample(x: TimeSignal, target: int) -> TimeSignal:
    """Polyphase windowed-sinc resampling to ``target`` Hz.

    Output length is round(len * target / source). The edges are extended
    linearly before filtering so that constant signals come through unchanged.
    """
    source = int(x.sample_rate)
    target = int(target)
    if source <= 0 or target <= 0:
        raise ValueError("sample rates must be positive")
    if source == target:
        return TimeSignal(x.samples.copy(), source)
    g = math.gcd(source, target)
    up, down = target // g, source // g
    y = resample_poly(x.samples, up, down, window=_polyphase_filter(up, down), padtype="line")
    n_out = int(round(len(x) * target / source))
    if len(y) < n_out:
        y = np.concatenate([y, np.full(n_out - len(y), y[-1] if len(y) else 0.0)])
    return TimeSignal(y[:n_out], target)


# -- segmentation -------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    samples: np.ndarray
    source_id: str
    offset: int
    n_valid: int = SEGMENT_LENGTH  # samples taken from the source; the rest is zero padding

    def __post_init__(self):
        if len(self.samples) != SEGMENT_LENGTH:
            raise ShapeMismatch(f"segments hold {SEGMENT_LENGTH} samples, got {len(self.samples)}")

    @property
    def padded(self) -> bool:
        return self.n_valid < SEGMENT_LENGTH

    @property
    def n_padded(self) -> int:
        return SEGMENT_LENGTH - self.n_valid


def segment_offsets(n: int, length: int = SEGMENT_LENGTH, hop: int = SEGMENT_HOP) -> List[int]:
    """Offsets k*hop until the last window reaches the end of the signal."""
    if n <= 0:
        raise SignalEmpty("cannot segment an empty signal")
    offsets = [0]
    while offsets[-1] + length < n:
        offsets.append(offsets[-1] + hop)
    return offsets


def segment(x: TimeSignal, source_id: str = "") -> List[Segment]:
    """Half-overlapping one-second windows; the last one is zero-padded if it runs past the end."""
    if x.sample_rate != 16000:
        raise ShapeMismatch(f"segmentation expects 16 kHz input, got {x.sample_rate} Hz")
    out = []
    for off in segment_offsets(len(x)):
        chunk = x.samples[off:off + SEGMENT_LENGTH]
        n_valid = len(chunk)
        if n_valid < SEGMENT_LENGTH:
            chunk = np.concatenate([chunk, np.zeros(SEGMENT_LENGTH - n_valid)])
        out.append(Segment(np.array(chunk, dtype=np.float64), source_id, off, n_valid))
    return out


def segment_filename(seg: Segment) -> str:
    return f"{seg.source_id}_{seg.offset}.wav"


def write_segment_cache(segments, directory) -> List[Path]:
    """One WAV per segment, named ``<source id>_<offset>.wav``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for seg in segments:
        p = directory / segment_filename(seg)
        write_wav(p, TimeSignal(seg.samples, SEGMENT_LENGTH))
        paths.append(p)
    return paths


# -- manifest ---------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    split: str
    source_id: str


@dataclass
class DatasetManifest:
    """Tab-separated ``path<TAB>split<TAB>id`` lines; relative paths resolve against ``root``."""

    entries: List[ManifestEntry]
    root: Path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise IoFailure(f"{path}: {exc}") from exc
        root = path.parent
        entries = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise UnsupportedFormat(f"{path}:{lineno}: expected path, split and id separated by tabs")
            p, split, sid = parts
            if split not in SPLITS:
                raise UnsupportedFormat(f"{path}:{lineno}: split must be one of {SPLITS}, got {split!r}")
            entries.append(ManifestEntry(Path(p), split, sid))
        manifest = cls(entries, root)
        manifest.validate()
        return manifest

    def resolve(self, entry: ManifestEntry) -> Path:
        return entry.path if entry.path.is_absolute() else self.root / entry.path

    def validate(self):
        splits = {}
        for e in self.entries:
            p = self.resolve(e)
            if not p.is_file():
                raise IoFailure(f"manifest entry {p} does not exist")
            key = p.resolve()
            if splits.setdefault(key, e.split) != e.split:
                raise UnsupportedFormat(f"{p} appears in both splits")

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def dump(self, path) -> None:
        lines = [f"{e.path}\t{e.split}\t{e.source_id}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")


def load_segments(manifest: DatasetManifest, split: str = "train", sample_rate: int = 16000) -> List[Segment]:
    """Read, resample and segment every file of one split, in manifest order."""
    out = []
    for e in manifest.split(split):
        x = read_wav(manifest.resolve(e))
        if x.sample_rate != sample_rate:
            x = resample(x, sample_rate)
        out.extend(segment(x, e.source_id))
    return out
