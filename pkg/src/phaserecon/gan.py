"""Adversarially trained spectrogram-to-signal reconstruction.

The generator refines a short Griffin-Lim warm start. It sees the complex
spectrogram as 2F' channels (real parts then imaginary parts, each normalized
per frequency) over N frames and is fully convolutional along time. The
discriminator first synthesizes the waveform with a fixed inverse-STFT block,
then applies strided convolutions; the input magnitude is injected as a
band-pooled conditioning map part way through.

Training alternates a least-squares discriminator update with a generator
update on the least-squares deception term plus a weighted feature-matching
distance between the discriminator's hidden layers on real and generated input.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d

from . import autodiff as ad
from . import griffinlim as gl
from . import spectral as sp
from .errors import EmptyBatch, NonFiniteLoss, NonHermitianInput, ShapeMismatch
from .layers import Concat, Conv1D, FullyConnected, LeakyReLU, Network, PReLU, ResidualAdd
from .optim import RMSprop
from .spectral import ComplexSpectrogram, MagnitudeSpectrogram, StftConfig, TimeSignal

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8
# bins whose spread is this far below the loudest bin's are treated as empty
RELATIVE_STD_FLOOR = 1e-3


# -- half/full spectrum ------------------------------------------------------

def reduce_spectrum(full: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Keep bins 0..F/2 of a full (F, N) spectrum of a real signal."""
    full = np.asarray(full, dtype=np.complex128)
    F = full.shape[0]
    mirrored = np.conj(full[(-np.arange(F)) % F])
    scale = max(1.0, float(np.max(np.abs(full), initial=0.0)))
    if np.max(np.abs(full - mirrored), initial=0.0) > atol * scale:
        raise NonHermitianInput("spectrum is not conjugate-symmetric; the signal is not real")
    return full[:F // 2 + 1].copy()


def expand_spectrum(half: np.ndarray, fft_size: int) -> np.ndarray:
    """Rebuild the full (fft_size, N) spectrum by conjugate symmetry."""
    half = np.asarray(half, dtype=np.complex128)
    if half.shape[0] != fft_size // 2 + 1:
        raise ShapeMismatch(f"half spectrum of {half.shape[0]} bins does not match fft_size={fft_size}")
    full = np.empty((fft_size,) + half.shape[1:], dtype=np.complex128)
    full[:half.shape[0]] = half
    k = np.arange(half.shape[0], fft_size)
    full[k] = np.conj(half[fft_size - k])
    return full


# -- normalization -------------------------------------------------------------

@dataclass
class NormStats:
    """Per-frequency mean/std of real and imaginary parts, arrays of shape (2, F')."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)
        if self.mean.shape != self.std.shape or self.mean.ndim != 2 or self.mean.shape[0] != 2:
            raise ShapeMismatch("normalization stats must both have shape (2, F')")

    @property
    def channel_mean(self):
        return self.mean.reshape(1, -1, 1)

    @property
    def channel_std(self):
        return self.std.reshape(1, -1, 1)

    @classmethod
    def fit(cls, spectrograms: Sequence[np.ndarray], relative_floor: float = RELATIVE_STD_FLOOR,
            smooth_bins: int = 1) -> "NormStats":
        """Statistics over every frame of every spectrogram.

        The std is clamped to ``relative_floor`` times its largest value so that
        near-silent bins are not blown up by normalization. With ``smooth_bins`` > 1
        each bin's std is replaced by the largest std within that many neighbouring
        bins, which keeps a bin that happens to be quiet in a sparse corpus from
        amplifying unseen content.
        """
        stacked = np.concatenate([np.asarray(c) for c in spectrograms], axis=1)
        parts = np.stack([stacked.real, stacked.imag])
        std = parts.std(axis=2)
        if smooth_bins > 1:
            std = maximum_filter1d(std, smooth_bins, axis=1, mode="nearest")
        return cls(parts.mean(axis=2), np.maximum(std, relative_floor * std.max()))


def to_channels(c: np.ndarray) -> np.ndarray:
    """(..., F', N) complex -> (..., 2F', N) real with real parts first."""
    return np.concatenate([c.real, c.imag], axis=-2)


def from_channels(t: np.ndarray) -> np.ndarray:
    F = t.shape[-2] // 2
    return t[..., :F, :] + 1j * t[..., F:, :]


def normalize(c: ComplexSpectrogram, stats: NormStats) -> ad.Tensor:
    """Complex spectrogram -> (1, 2F', N) tensor of standardized parts."""
    return ad.Tensor(normalize_array(c.values[None], stats))


def normalize_array(c: np.ndarray, stats: NormStats) -> np.ndarray:
    return (to_channels(c) - stats.channel_mean) / stats.channel_std


def denormalize(t, stats: NormStats, config: StftConfig = StftConfig()) -> ComplexSpectrogram:
    data = t.data if isinstance(t, ad.Tensor) else np.asarray(t)
    if data.ndim == 3:
        if data.shape[0] != 1:
            raise ShapeMismatch("denormalize returns one spectrogram; pass a single-item batch")
        data = data[0]
    return ComplexSpectrogram(from_channels(data * stats.std.reshape(-1, 1) + stats.mean.reshape(-1, 1)), config)


# -- architectures -------------------------------------------------------------

@dataclass
class GeneratorConfig:
    hidden: int = 64
    edge_kernel: int = 9
    res_kernel: int = 3
    n_res_blocks: int = 3
    # add the network input to its output so the refinement is learned as a residual
    global_skip: bool = True
    out_init: str = "zeros"


@dataclass
class DiscriminatorConfig:
    channels: tuple = (16, 32, 64, 64)
    kernel: int = 31
    stride: int = 4
    slope: float = 0.2
    concat_after: int = 2
    cond_bands: int = 16
    fc_units: int = 256
    # relative squared-window floor for the synthesis front block; keeps tapered
    # edges of inconsistent spectrograms from dominating the waveform
    front_edge_floor: float = 1e-3

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if not 1 <= self.concat_after <= len(self.channels):
            raise ValueError("concat_after must index one of the conv blocks")


def generator_layers(n_bins: int, cfg: GeneratorConfig = GeneratorConfig()):
    io = 2 * n_bins
    layers = [Conv1D("g_in", cfg.edge_kernel, cfg.hidden), PReLU("g_in_act")]
    prev = "g_in_act"
    for i in range(cfg.n_res_blocks):
        layers += [
            Conv1D(f"g_res{i}_a", cfg.res_kernel, cfg.hidden),
            PReLU(f"g_res{i}_act"),
            Conv1D(f"g_res{i}_b", cfg.res_kernel, cfg.hidden),
            ResidualAdd(f"g_res{i}_add", source=prev),
        ]
        prev = f"g_res{i}_add"
    layers.append(Conv1D("g_out", cfg.edge_kernel, io, init=cfg.out_init))
    if cfg.global_skip:
        layers.append(ResidualAdd("g_skip", source="input"))
    return layers


def identity_generator_layers(n_bins: int):
    return [Conv1D("g_identity", 1, 2 * n_bins, init="identity")]


def discriminator_layers(cfg: DiscriminatorConfig = DiscriminatorConfig()):
    layers = []
    for i, ch in enumerate(cfg.channels, start=1):
        layers += [Conv1D(f"d_conv{i}", cfg.kernel, ch, stride=cfg.stride), LeakyReLU(f"d_act{i}", cfg.slope)]
        if i == cfg.concat_after:
            layers.append(Concat("d_cond", source="cond"))
    layers += [FullyConnected("d_fc1", cfg.fc_units), LeakyReLU("d_fc1_act", cfg.slope), FullyConnected("d_score", 1)]
    return layers


# names of the hidden layers whose outputs are the features D_1..D_L
def discriminator_feature_names(cfg: DiscriminatorConfig):
    return [f"d_act{i}" for i in range(1, len(cfg.channels) + 1)] + ["d_fc1_act"]


def _as_dtype(x, dtype):
    """Constant inputs are converted to the network's dtype; tensors on the tape are left alone."""
    if isinstance(x, ad.Tensor):
        return x if x.requires_grad or x.data.dtype == dtype else ad.Tensor(x.data.astype(dtype))
    return ad.Tensor(np.asarray(x, dtype=dtype))


class GeneratorNet:
    def __init__(self, n_bins: int, cfg: GeneratorConfig = GeneratorConfig(), seed: int = 0, layers=None):
        self.config = cfg
        self.n_bins = n_bins
        specs = layers if layers is not None else generator_layers(n_bins, cfg)
        if any(isinstance(s, FullyConnected) for s in specs):
            raise ValueError("the generator must be fully convolutional")
        self.net = Network(specs, (2 * n_bins, None), seed=seed)
        if self.net.output_shape[0] != 2 * n_bins:
            raise ShapeMismatch("generator output channels must equal 2F'")

    def __call__(self, x):
        x = _as_dtype(x, self.net.dtype)
        out = self.net.forward(x)
        if out.shape[2] != x.shape[2]:
            raise ShapeMismatch("generator changed the frame count; use stride 1 and 'same' padding")
        return out

    def parameters(self):
        return self.net.parameters()


class DiscriminatorNet:
    """Inverse-STFT front block followed by a conditional convolutional classifier."""

    def __init__(self, stft_cfg: StftConfig, n_frames: int, cfg: DiscriminatorConfig = DiscriminatorConfig(),
                 seed: int = 0):
        self.config = cfg
        self.stft_config = stft_cfg
        self.n_frames = n_frames
        self.net = Network(discriminator_layers(cfg), (1, stft_cfg.signal_length(n_frames)),
                           extras_channels={"cond": cfg.cond_bands}, seed=seed)
        self.cond_length = self.net.shapes[f"d_act{cfg.concat_after}"][1]
        self.feature_names = discriminator_feature_names(cfg)

    def condition(self, a: np.ndarray) -> np.ndarray:
        """(B, F', N) magnitudes -> (B, bands, cond_length) log-magnitude band map."""
        la = np.log1p(a)
        bands = np.stack([g.mean(axis=1) for g in np.array_split(la, self.config.cond_bands, axis=1)], axis=1)
        idx = np.minimum(((np.arange(self.cond_length) + 0.5) * a.shape[2] / self.cond_length).astype(int),
                         a.shape[2] - 1)
        return bands[:, :, idx]

    def __call__(self, c_channels, a: np.ndarray):
        """Returns ``(scores (B,), [D_0, D_1, ..., D_L])`` where D_0 is the synthesized waveform."""
        c_channels = _as_dtype(c_channels, self.net.dtype)
        if c_channels.shape[2] != self.n_frames:
            raise ShapeMismatch(f"discriminator built for {self.n_frames} frames, got {c_channels.shape[2]}")
        wave = ad.istft_block(c_channels, self.stft_config, self.config.front_edge_floor)
        cond = ad.Tensor(self.condition(a).astype(self.net.dtype))
        out = self.net.forward(wave, {"cond": cond})
        feats = [wave] + [self.net.activation(n) for n in self.feature_names]
        return ad.sum_per_item(out), feats

    def parameters(self):
        return self.net.parameters()


# -- losses ------------------------------------------------------------------

def _scores(s):
    s = ad.as_tensor(s)
    if s.data.size == 0:
        raise EmptyBatch("empty batch of scores")
    return s


def loss_V(scores_real, scores_fake) -> ad.Tensor:
    """Discriminator criterion: targets 1 for real, 0 for generated."""
    r, f = _scores(scores_real), _scores(scores_fake)
    return ((r - 1.0) ** 2).mean() * 0.5 + (f ** 2).mean() * 0.5


def loss_U(scores_fake) -> ad.Tensor:
    """Generator deception criterion: target 1 for generated input."""
    return ((_scores(scores_fake) - 1.0) ** 2).mean() * 0.5


def loss_I(features_target, features_fake, weights) -> ad.Tensor:
    """sum_l w_l ||D_l(c) - D_l(c_hat)||^2, averaged over the batch axis."""
    if not (len(features_target) == len(features_fake) == len(weights)):
        raise ShapeMismatch("feature lists and weights must have equal length")
    total = ad.Tensor(0.0)
    for ft, ff, w in zip(features_target, features_fake, weights):
        ft, ff = ad.as_tensor(ft), ad.as_tensor(ff)
        if ft.shape != ff.shape:
            raise ShapeMismatch(f"feature shapes {ft.shape} and {ff.shape} differ")
        if w == 0:
            continue
        batch = ft.shape[0] if ft.data.ndim > 0 else 1
        total = total + ((ft - ff) ** 2).sum() * (w / batch)
    return total


def default_feature_weights(n_features: int):
    return (0.0,) + (1.0,) * (n_features - 1)


# -- data-side operations --------------------------------------------------------

def augment_phase(x: TimeSignal, seed: Optional[int] = None, theta: Optional[float] = None) -> TimeSignal:
    """Rotate the positive-frequency content of ``x`` by a common angle.

    Equivalent to taking the real part of the analytic signal times ``exp(j*theta)``.
    DC and Nyquist components are real and are left as they are, so signal energy
    is preserved exactly.
    """
    if theta is None:
        theta = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi)
    n = len(x)
    X = np.fft.rfft(x.samples)
    hi = X.shape[0] - 1 if n % 2 == 0 else X.shape[0]
    X[1:hi] *= np.exp(1j * theta)
    return TimeSignal(np.fft.irfft(X, n=n), x.sample_rate)


def warm_start(a: MagnitudeSpectrogram, seed: int = 0, iters: int = 5) -> ComplexSpectrogram:
    """A few Griffin-Lim iterations from a random phase; the generator's input."""
    opts = gl.GriffinLimOptions(max_iters=iters, phase_init=gl.RandomUniform(seed), record_objective=False)
    return gl.reconstruct(a, opts).final_spectrogram


def _warm_array(a: np.ndarray, seed: int, iters: int, cfg: StftConfig) -> np.ndarray:
    phi0 = gl.initial_phase(gl.RandomUniform(seed), a.shape, cfg)
    phi, _, _, _ = gl.run_array(a, phi0, iters, cfg, record=False)
    return a * phi


def generator_apply(G: GeneratorNet, warm: np.ndarray, stats: NormStats) -> ad.Tensor:
    """(B, F', N) complex warm starts -> (B, 2F', N) de-normalized output channels."""
    out = G(ad.Tensor(normalize_array(warm, stats)))
    return out * stats.channel_std + stats.channel_mean


def generator_forward(G: GeneratorNet, a: MagnitudeSpectrogram, warm: ComplexSpectrogram,
                      stats: NormStats) -> ComplexSpectrogram:
    if a.shape != warm.shape:
        raise ShapeMismatch(f"magnitude {a.shape} and warm start {warm.shape} differ")
    out = generator_apply(G, warm.values[None], stats)
    return ComplexSpectrogram(from_channels(out.data[0]), warm.config)


def discriminator_forward(D: DiscriminatorNet, c: ComplexSpectrogram, a: MagnitudeSpectrogram):
    scores, feats = D(ad.Tensor(to_channels(c.values)[None]), a.values[None])
    return float(scores.data[0]), feats


# -- training ------------------------------------------------------------------

@dataclass
class TrainConfig:
    lam: float = 1.0
    feature_weights: Optional[tuple] = None  # None -> w_0 = 0, w_l = 1 otherwise
    batch_size: int = 10
    epochs: int = 5
    gl_warm_iters: int = 5
    seed: int = 0
    d_steps_per_g_step: int = 1
    learning_rate: float = 5e-5
    alpha: float = 0.5
    epsilon: float = 1e-8
    max_steps: Optional[int] = None
    augment: bool = True
    # frequency neighbourhood for the normalization std (see NormStats.fit)
    norm_smooth_bins: int = 17
    # "float32" halves memory traffic and roughly triples matmul speed on CPU
    precision: str = "float32"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if isinstance(self.generator, dict):
            self.generator = GeneratorConfig(**self.generator)
        if isinstance(self.discriminator, dict):
            self.discriminator = DiscriminatorConfig(**self.discriminator)
        if isinstance(self.stft, dict):
            self.stft = StftConfig.from_dict(self.stft)
        if self.feature_weights is not None:
            self.feature_weights = tuple(float(w) for w in self.feature_weights)
            if any(w < 0 for w in self.feature_weights):
                raise ValueError("feature weights must be nonnegative")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if min(self.batch_size, self.epochs, self.d_steps_per_g_step) < 1 or self.gl_warm_iters < 0:
            raise ValueError("counts must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stft"] = self.stft.to_dict()
        d["discriminator"]["channels"] = list(self.discriminator.channels)
        if self.feature_weights is not None:
            d["feature_weights"] = list(self.feature_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class ModelBundle:
    generator: GeneratorNet
    discriminator: Optional[DiscriminatorNet]
    stats: NormStats
    stft: StftConfig
    train_config: Optional[TrainConfig] = None


@dataclass
class Batch:
    target: np.ndarray   # (B, F', N) complex spectrograms of the (augmented) signals
    magnitude: np.ndarray
    warm: np.ndarray


def prepare_batch(signals: Sequence[np.ndarray], cfg: TrainConfig, rng: np.random.Generator,
                  augment: bool = True) -> Batch:
    targets, warms = [], []
    for x in signals:
        if augment:
            x = augment_phase(TimeSignal(x, cfg.stft.sample_rate), theta=rng.uniform(0, 2 * np.pi)).samples
        c = sp.stft_array(x, cfg.stft)
        targets.append(c)
        warms.append(_warm_array(np.abs(c), int(rng.integers(2 ** 31)), cfg.gl_warm_iters, cfg.stft))
    target = np.stack(targets)
    return Batch(target, np.abs(target), np.stack(warms))


def discriminator_step(G, D, batch: Batch, stats: NormStats, opt: RMSprop):
    fake = generator_apply(G, batch.warm, stats).detach()
    s_real, _ = D(to_channels(batch.target), batch.magnitude)
    s_fake, _ = D(fake, batch.magnitude)
    v = loss_V(s_real, s_fake)
    opt.zero_grad()
    v.backward()
    opt.step()
    return float(v.data)


def generator_step(G, D, batch: Batch, stats: NormStats, opt: RMSprop, lam: float, weights):
    d_params = D.parameters()
    for p in d_params:
        p.requires_grad = False
    try:
        _, real_feats = D(to_channels(batch.target), batch.magnitude)
        real_feats = [f.detach() for f in real_feats]
        fake = generator_apply(G, batch.warm, stats)
        s_fake, fake_feats = D(fake, batch.magnitude)
        u = loss_U(s_fake)
        i = loss_I(real_feats, fake_feats, weights) if lam > 0 else ad.Tensor(0.0)
        total = u + i * lam
        opt.zero_grad()
        if total.requires_grad:
            total.backward()
        opt.step()
    finally:
        for p in d_params:
            p.requires_grad = True
    return float(u.data), float(i.data), float(total.data)


def build_models(cfg: TrainConfig, n_frames: int):
    G = GeneratorNet(cfg.stft.n_bins, cfg.generator, seed=cfg.seed)
    D = DiscriminatorNet(cfg.stft, n_frames, cfg.discriminator, seed=cfg.seed + 1)
    return G, D


def train(dataset: Sequence[np.ndarray], cfg: TrainConfig = TrainConfig(), G: Optional[GeneratorNet] = None,
          D: Optional[DiscriminatorNet] = None, callback=None):
    """Adversarial training over equal-length signals. Returns ``(bundle, loss_log)``.

    ``loss_log`` holds one dict per generator step with keys step, V, U, I, G_total.
    """
    if len(dataset) == 0:
        raise EmptyBatch("training set is empty")
    data = [np.asarray(x, dtype=np.float64) for x in dataset]
    if len({len(x) for x in data}) != 1:
        raise ShapeMismatch("training signals must share one length")
    n_frames = cfg.stft.n_frames(len(data[0]))
    if G is None or D is None:
        G0, D0 = build_models(cfg, n_frames)
        G, D = G or G0, D or D0
    if cfg.precision == "float32":
        G.net.cast(np.float32)
        D.net.cast(np.float32)
    stats = NormStats.fit([sp.stft_array(x, cfg.stft) for x in data], smooth_bins=cfg.norm_smooth_bins)
    weights = cfg.feature_weights or default_feature_weights(len(D.feature_names) + 1)
    if len(weights) != len(D.feature_names) + 1:
        raise ShapeMismatch(f"need {len(D.feature_names) + 1} feature weights, got {len(weights)}")

    opt_g = RMSprop(G.parameters(), cfg.learning_rate, cfg.alpha, cfg.epsilon)
    opt_d = RMSprop(D.parameters(), cfg.learning_rate, cfg.alpha, cfg.epsilon)
    rng = np.random.default_rng(cfg.seed)
    loss_log = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(order), cfg.batch_size):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            batch = prepare_batch([data[i] for i in order[start:start + cfg.batch_size]], cfg, rng, cfg.augment)
            for _ in range(cfg.d_steps_per_g_step):
                v = discriminator_step(G, D, batch, stats, opt_d)
            u, i, total = generator_step(G, D, batch, stats, opt_g, cfg.lam, weights)
            if not np.all(np.isfinite([v, u, i, total])):
                raise NonFiniteLoss(step)
            row = {"step": step, "V": v, "U": u, "I": i, "G_total": total}
            loss_log.append(row)
            if callback is not None:
                callback(row)
            log.debug("epoch %d step %d V=%.6g U=%.6g I=%.6g", epoch, step, v, u, i)
            step += 1
    return ModelBundle(G, D, stats, cfg.stft, cfg), loss_log


def reconstruct_neural(bundle: ModelBundle, a: MagnitudeSpectrogram, seed: int = 0,
                       warm_iters: Optional[int] = None):
    """Warm start, generator, synthesis. Returns ``(c_hat, signal, warm)``."""
    if warm_iters is None:
        warm_iters = bundle.train_config.gl_warm_iters if bundle.train_config else 5
    warm = warm_start(a, seed, warm_iters)
    c_hat = generator_forward(bundle.generator, a, warm, bundle.stats)
    return c_hat, sp.istft(c_hat), warm


LOSS_CSV_FIELDS = ("step", "V", "U", "I", "G_total")


def loss_csv_text(loss_log) -> str:
    """``step,V,U,I,G_total`` with losses at full precision (``%.17g``) so reruns compare byte-for-byte."""
    lines = [",".join(LOSS_CSV_FIELDS)]
    for row in loss_log:
        lines.append(",".join([str(int(row["step"]))] + [format(float(row[k]), ".17g") for k in LOSS_CSV_FIELDS[1:]]))
    return "\n".join(lines) + "\n"
