"""RMSprop with the squared-gradient decay exposed as ``alpha``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class OptimizerState:
    learning_rate: float = 5e-5
    alpha: float = 0.5
    epsilon: float = 1e-8
    accumulators: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def rmsprop_step(state: OptimizerState, params, grads):
    """m <- a*m + (1-a)*g^2 ; theta <- theta - lr*g/sqrt(m + eps).

    ``params`` and ``grads`` are sequences of arrays; returns new parameter arrays
    and the updated state (accumulators are created as zeros on first use).
    """
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    if not state.accumulators:
        state.accumulators = [np.zeros_like(np.asarray(p, dtype=np.result_type(p, np.float32))) for p in params]
    if len(state.accumulators) != len(params):
        raise ShapeMismatch("optimizer state does not match parameter list")
    new_params = []
    a = state.alpha
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.accumulators[i]
        if np.shape(p) != np.shape(g) or np.shape(m) != np.shape(p):
            raise ShapeMismatch(f"parameter {i}: shapes {np.shape(p)}, {np.shape(g)}, {np.shape(m)}")
        m = a * m + (1.0 - a) * g * g
        state.accumulators[i] = m
        new_params.append(p - state.learning_rate * g / np.sqrt(m + state.epsilon))
    return new_params, state


class RMSprop:
    """Applies :func:`rmsprop_step` in place to a list of tensors."""

    def __init__(self, tensors, lr=5e-5, alpha=0.5, eps=1e-8):
        self.tensors = list(tensors)
        self.state = OptimizerState(lr, alpha, eps)

    def step(self):
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in self.tensors]
        new, self.state = rmsprop_step(self.state, [t.data for t in self.tensors], grads)
        for t, v in zip(self.tensors, new):
            t.data = v

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None
