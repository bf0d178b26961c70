"""Layer specifications and a sequential network with named skip connections."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Union

import numpy as np

from . import autodiff as ad
from .errors import GraphNotRecorded, ShapeMismatch


@dataclass(frozen=True)
class Conv1D:
    name: str
    kernel: int
    out_channels: int
    stride: int = 1
    padding: Union[int, str] = "same"
    # "glorot" (seeded uniform) or "identity"/"zeros" for special starting points
    init: str = "glorot"

    def __post_init__(self):
        if min(self.kernel, self.stride, self.out_channels) < 1:
            raise ValueError(f"{self.name}: kernel, stride and out_channels must be positive")
        if self.padding == "same" and self.kernel % 2 == 0:
            raise ValueError(f"{self.name}: 'same' padding needs an odd kernel")

    @property
    def pad(self) -> int:
        return (self.kernel - 1) // 2 if self.padding == "same" else int(self.padding)


@dataclass(frozen=True)
class PReLU:
    name: str
    per_channel: bool = True
    init: float = 0.25


@dataclass(frozen=True)
class LeakyReLU:
    name: str
    slope: float = 0.2

    def __post_init__(self):
        if not 0 < self.slope < 1:
            raise ValueError(f"{self.name}: slope must lie in (0, 1)")


@dataclass(frozen=True)
class FullyConnected:
    name: str
    out_units: int

    def __post_init__(self):
        if self.out_units < 1:
            raise ValueError(f"{self.name}: out_units must be positive")


@dataclass(frozen=True)
class ResidualAdd:
    name: str
    source: str


@dataclass(frozen=True)
class Concat:
    name: str
    source: str


LayerSpec = Union[Conv1D, PReLU, LeakyReLU, FullyConnected, ResidualAdd, Concat]
_KINDS = {cls.__name__: cls for cls in (Conv1D, PReLU, LeakyReLU, FullyConnected, ResidualAdd, Concat)}


def spec_to_dict(spec: LayerSpec) -> dict:
    return {"kind": type(spec).__name__, **asdict(spec)}


def spec_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    cls = _KINDS[d.pop("kind")]
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in d.items() if k in names})


def glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Network:
    """Layers applied in order; skips and concats refer back by layer name.

    Sources may name an earlier layer, ``"input"``, or an entry of ``extras``
    (additional inputs passed to :meth:`forward`, e.g. conditioning features).
    Parameter shapes are inferred once from ``input_shape`` = (channels, length);
    length may be ``None`` when no dense layer needs it.
    """

    def __init__(self, layers, input_shape, extras_channels=None, seed=0):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.extras_channels = dict(extras_channels or {})
        self.params: dict[str, ad.Tensor] = {}
        self.shapes: dict[str, tuple] = {}
        self.activations = None
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names) or "input" in names:
            raise ValueError("layer names must be unique and not 'input'")
        self._build(np.random.default_rng(seed))

    def _source_shape(self, source, length):
        if source in self.shapes:
            return self.shapes[source]
        if source in self.extras_channels:
            return (self.extras_channels[source], length)
        raise ValueError(f"unknown source {source!r}")

    def _build(self, rng):
        ch, length = self.input_shape
        self.shapes = {"input": (ch, length)}
        for layer in self.layers:
            if isinstance(layer, Conv1D):
                k, o = layer.kernel, layer.out_channels
                if layer.init == "glorot":
                    w = glorot(rng, (o, ch, k), ch * k, o * k)
                elif layer.init == "zeros":
                    w = np.zeros((o, ch, k))
                elif layer.init == "identity":
                    if o != ch:
                        raise ValueError(f"{layer.name}: identity init needs equal channel counts")
                    w = np.zeros((o, ch, k))
                    w[np.arange(o), np.arange(o), k // 2] = 1.0
                else:
                    raise ValueError(f"{layer.name}: unknown init {layer.init!r}")
                self.params[f"{layer.name}.weight"] = ad.parameter(w)
                self.params[f"{layer.name}.bias"] = ad.parameter(np.zeros(o))
                if length is not None:
                    length = (length + 2 * layer.pad - k) // layer.stride + 1
                    if length < 1:
                        raise ShapeMismatch(f"{layer.name}: non-positive output length")
                ch = o
            elif isinstance(layer, PReLU):
                n = ch if layer.per_channel else 1
                self.params[f"{layer.name}.slope"] = ad.parameter(np.full(n, layer.init))
            elif isinstance(layer, FullyConnected):
                if length is None:
                    raise ShapeMismatch(f"{layer.name}: dense layer needs a fixed input length")
                n_in = ch * length
                self.params[f"{layer.name}.weight"] = ad.parameter(
                    glorot(rng, (layer.out_units, n_in), n_in, layer.out_units))
                self.params[f"{layer.name}.bias"] = ad.parameter(np.zeros(layer.out_units))
                ch, length = layer.out_units, 1
            elif isinstance(layer, ResidualAdd):
                src = self._source_shape(layer.source, length)
                if src[0] != ch or (src[1] is not None and length is not None and src[1] != length):
                    raise ShapeMismatch(f"{layer.name}: cannot add {src} to {(ch, length)}")
            elif isinstance(layer, Concat):
                src = self._source_shape(layer.source, length)
                ch += src[0]
            self.shapes[layer.name] = (ch, length)
        self.output_shape = (ch, length)

    @property
    def dtype(self):
        return next(iter(self.params.values())).data.dtype if self.params else np.dtype(np.float64)

    def cast(self, dtype):
        """Convert every parameter in place (e.g. to float32 for training)."""
        for p in self.params.values():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def forward(self, x, extras=None):
        """Run the network; per-layer outputs are kept in ``self.activations``."""
        x = ad.as_tensor(x)
        if x.shape[1] != self.input_shape[0]:
            raise ShapeMismatch(f"expected {self.input_shape[0]} input channels, got {x.shape[1]}")
        extras = extras or {}
        acts = {"input": x}
        order = []
        h = x
        for layer in self.layers:
            if isinstance(layer, Conv1D):
                h = ad.conv1d(h, self.params[f"{layer.name}.weight"], self.params[f"{layer.name}.bias"],
                              stride=layer.stride, padding=layer.pad)
            elif isinstance(layer, PReLU):
                h = ad.prelu(h, self.params[f"{layer.name}.slope"])
            elif isinstance(layer, LeakyReLU):
                h = ad.leaky_relu(h, layer.slope)
            elif isinstance(layer, FullyConnected):
                h = ad.linear(h, self.params[f"{layer.name}.weight"], self.params[f"{layer.name}.bias"])
            elif isinstance(layer, ResidualAdd):
                src = acts.get(layer.source, extras.get(layer.source))
                if src is None:
                    raise ShapeMismatch(f"{layer.name}: source {layer.source!r} not available")
                if src.shape != h.shape:
                    raise ShapeMismatch(f"{layer.name}: cannot add {src.shape} to {h.shape}")
                h = ad.add(h, src)
            elif isinstance(layer, Concat):
                src = acts.get(layer.source, extras.get(layer.source))
                if src is None:
                    raise ShapeMismatch(f"{layer.name}: source {layer.source!r} not available")
                h = ad.concat([h, ad.as_tensor(src)], axis=1)
            acts[layer.name] = h
            order.append((layer.name, h))
        self.activations = order
        return h

    def activation(self, name):
        if self.activations is None:
            raise GraphNotRecorded("forward has not been run")
        for n, t in self.activations:
            if n == name:
                return t
        raise KeyError(name)

    def release(self):
        self.activations = None

    def spec_dicts(self):
        return [spec_to_dict(layer) for layer in self.layers]
