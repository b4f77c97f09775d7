"""First-order optimizers over flat parameter vectors.

Three update rules: plain SGD, SGD with classical momentum, and Adam
with bias-corrected moment estimates.  State lives in an
``OptimizerState``; ``step`` updates the state in place and returns the
new parameter vector without mutating the old one.
"""

from dataclasses import dataclass, field

import numpy as np

OPTIMIZER_KINDS = ("sgd", "momentum", "adam")

MOMENTUM_COEF = 0.9
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    kind: str
    dim: int
    t: int = 0
    velocity: np.ndarray = field(default=None, repr=False)
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("parameter dimension must be >= 1")
        if self.kind == "momentum" and self.velocity is None:
            self.velocity = np.zeros(self.dim)
        if self.kind == "adam":
            if self.m is None:
                self.m = np.zeros(self.dim)
            if self.v is None:
                self.v = np.zeros(self.dim)


def make_optimizer(kind, dim):
    return OptimizerState(kind, int(dim))


def step(state, params, grad, lr):
    """One update of the given rule; returns the new parameter vector.

    SGD: theta - lr*g.  Momentum: v <- 0.9*v + g, theta - lr*v.  Adam:
    bias-corrected (0.9, 0.999, 1e-8) update.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != (state.dim,) or grad.shape != (state.dim,):
        raise ValueError(f"expected flat vectors of length {state.dim}")
    if not (np.isfinite(lr) and lr > 0):
        raise ValueError("learning rate must be positive and finite")
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient contains non-finite entries")
    state.t += 1
    if state.kind == "sgd":
        return params - lr * grad
    if state.kind == "momentum":
        state.velocity = MOMENTUM_COEF * state.velocity + grad
        return params - lr * state.velocity
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = state.m / (1.0 - ADAM_BETA1 ** state.t)
    v_hat = state.v / (1.0 - ADAM_BETA2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
