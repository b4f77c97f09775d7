"""Minimal feed-forward networks with exact hand-written backpropagation.

Parameters live in flat float64 vectors (layout: per layer, weight matrix
in C order then bias).  All randomness comes from numpy Generators passed
in explicitly; there is no global state.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn_kernels
from .nn_kernels import NO_MASK, param_count

DETERMINISTIC = "deterministic"
TRAIN = "train"
MC_DROPOUT = "mc-dropout"

_ACTIVATIONS = {"relu": nn_kernels.RELU, "tanh": nn_kernels.TANH}


@dataclass(frozen=True)
class MlpArchitecture:
    """Dense network shape: layer sizes, activation, optional dropout.

    ``dropout`` is a (hidden_layer_index, drop_probability) pair; index 1
    addresses the first hidden layer.  Dropout uses the inverted
    convention: kept activations are scaled by 1/(1-p) at sampling time,
    so deterministic inference needs no rescaling.
    """

    layer_sizes: tuple
    activation: str = "relu"
    dropout: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("architecture needs at least input and output layers")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("all layer sizes must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.dropout is not None:
            layer, p = self.dropout
            n_hidden = len(self.layer_sizes) - 2
            if not 1 <= layer <= n_hidden:
                raise ValueError(
                    f"dropout layer {layer} does not address a hidden layer "
                    f"(valid: 1..{n_hidden})")
            if not 0.0 <= p < 1.0:
                raise ValueError(f"drop probability {p} outside [0, 1)")
            object.__setattr__(self, "dropout", (int(layer), float(p)))

    @property
    def sizes(self):
        return np.asarray(self.layer_sizes, dtype=np.int64)

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @property
    def param_count(self):
        return param_count(self.layer_sizes)

    @property
    def activation_code(self):
        return _ACTIVATIONS[self.activation]

    @property
    def drop_layer(self):
        return self.dropout[0] if self.dropout is not None else -1

    @property
    def drop_p(self):
        return self.dropout[1] if self.dropout is not None else 0.0


@dataclass
class ForwardTrace:
    """Backprop cache: per-layer inputs, raw hidden activations, dropout mask."""

    layer_sizes: tuple
    mode: str
    layer_inputs: np.ndarray
    hidden_raw: np.ndarray
    mask: np.ndarray = field(default_factory=lambda: NO_MASK)


def init_params(arch, rng):
    """Draw a fresh parameter vector.

    Per layer, weights and biases are uniform on (-1/sqrt(fan_in),
    +1/sqrt(fan_in)), drawn weights first (C order) then biases.
    """
    chunks = []
    for fan_in, fan_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_out))
    return np.concatenate(chunks)


def check_params(arch, params):
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (arch.param_count,):
        raise ValueError(
            f"parameter vector has shape {params.shape}, architecture "
            f"implies ({arch.param_count},)")
    if not np.all(np.isfinite(params)):
        raise ValueError("parameter vector contains non-finite entries")
    return params


def sample_mask(arch, n, rng):
    """Pre-scaled inverted-dropout mask for a batch of n inputs.

    Entries are 0 with probability p and 1/(1-p) otherwise; an empty
    (0, 0) mask stands for "no dropout".
    """
    if arch.dropout is None:
        return NO_MASK
    layer, p = arch.dropout
    width = arch.layer_sizes[layer]
    keep = rng.random((n, width)) >= p
    return keep.astype(np.float64) / (1.0 - p)


def forward(arch, params, x, mode=DETERMINISTIC, rng=None):
    """Evaluate the network on a single input vector.

    Returns (output, trace).  In ``train`` and ``mc-dropout`` modes a fresh
    dropout mask is sampled from ``rng`` when the architecture carries a
    dropout spec; ``deterministic`` mode applies none.
    """
    params = np.asarray(params, dtype=np.float64)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (arch.input_dim,):
        raise ValueError(
            f"input has shape {x.shape}, architecture expects ({arch.input_dim},)")
    if mode not in (DETERMINISTIC, TRAIN, MC_DROPOUT):
        raise ValueError(f"unknown forward mode {mode!r}")
    if mode == DETERMINISTIC or arch.dropout is None:
        mask = NO_MASK
        drop_layer = -1
    else:
        if rng is None:
            raise ValueError(f"mode {mode!r} needs an rng to sample dropout masks")
        mask = sample_mask(arch, 1, rng)
        drop_layer = arch.drop_layer
    out, layer_inputs, hidden_raw = nn_kernels.forward_batch(
        arch.sizes, params, x.reshape(1, -1), arch.activation_code,
        drop_layer, mask)
    trace = ForwardTrace(arch.layer_sizes, mode, layer_inputs, hidden_raw, mask)
    return out[0], trace


def backward(arch, params, trace, output_grad):
    """Gradient of output_grad . output w.r.t. the parameter vector."""
    if trace.layer_sizes != arch.layer_sizes:
        raise ValueError(
            f"trace was produced for layer sizes {trace.layer_sizes}, "
            f"not {arch.layer_sizes}")
    output_grad = np.atleast_1d(np.asarray(output_grad, dtype=np.float64))
    if output_grad.shape != (arch.output_dim,):
        raise ValueError(
            f"output gradient has shape {output_grad.shape}, expected "
            f"({arch.output_dim},)")
    drop_layer = arch.drop_layer if trace.mask.size else -1
    return nn_kernels.backward_batch(
        arch.sizes, np.asarray(params, dtype=np.float64), arch.activation_code,
        drop_layer, trace.mask, trace.layer_inputs, trace.hidden_raw,
        output_grad.reshape(1, -1))


def finite_diff_grad(loss_fn, params, h=1e-5):
    """Central-difference gradient estimate, one coordinate at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + h
        up = loss_fn(bumped)
        bumped[i] = params[i] - h
        down = loss_fn(bumped)
        grad[i] = (up - down) / (2.0 * h)
    return grad
