"""Hot numeric kernels for small dense networks.

Everything here operates on flat float64 parameter vectors and batched
inputs, is free of Python objects, and compiles under numba (see
``accel.maybe_njit``).  Parameter layout per layer: the weight matrix
W (fan_in x fan_out, C order) followed by the bias (fan_out,).

Activation codes: 0 = relu, 1 = tanh.  ``drop_layer`` is the index of the
hidden layer (1-based, < L) whose activations carry inverted dropout, or
-1 for none.  Masks are pre-scaled: entries are 0 or 1/(1-p) so that
deterministic inference needs no rescaling.
"""

import numpy as np

from .accel import maybe_njit

RELU = 0
TANH = 1

NO_MASK = np.empty((0, 0), dtype=np.float64)


def param_count(sizes):
    """Total parameter count: sum of (fan_in + 1) * fan_out over layers."""
    sizes = np.asarray(sizes)
    return int(np.sum((sizes[:-1] + 1) * sizes[1:]))


@maybe_njit
def forward_only(sizes, params, x, activation, drop_layer, mask):
    """Batched forward pass without trace buffers.

    x: (n, sizes[0]) -> returns (n, sizes[-1]).
    """
    L = sizes.shape[0] - 1
    h = np.ascontiguousarray(x)
    off = 0
    for l in range(1, L + 1):
        fan_in = sizes[l - 1]
        fan_out = sizes[l]
        W = params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        z = np.dot(h, W) + b
        if l < L:
            if activation == RELU:
                a = np.maximum(z, 0.0)
            else:
                a = np.tanh(z)
            if l == drop_layer:
                a = a * mask
            h = a
        else:
            h = z
    return h


@maybe_njit
def forward_batch(sizes, params, x, activation, drop_layer, mask):
    """Batched forward pass recording the buffers backprop needs.

    Returns (out, layer_inputs, hidden_raw) where layer_inputs stacks the
    post-dropout inputs h_0..h_{L-1} fed to each weight layer and
    hidden_raw stacks the pre-dropout activations a_1..a_{L-1}.
    """
    L = sizes.shape[0] - 1
    n = x.shape[0]
    in_w = 0
    hid_w = 0
    for l in range(L):
        in_w += sizes[l]
        if 1 <= l:
            hid_w += sizes[l]
    layer_inputs = np.empty((n, in_w), dtype=np.float64)
    hidden_raw = np.empty((n, hid_w), dtype=np.float64)

    h = np.ascontiguousarray(x)
    off = 0
    io = 0
    ho = 0
    for l in range(1, L + 1):
        fan_in = sizes[l - 1]
        fan_out = sizes[l]
        layer_inputs[:, io:io + fan_in] = h
        io += fan_in
        W = params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        z = np.dot(h, W) + b
        if l < L:
            if activation == RELU:
                a = np.maximum(z, 0.0)
            else:
                a = np.tanh(z)
            hidden_raw[:, ho:ho + fan_out] = a
            ho += fan_out
            if l == drop_layer:
                a = a * mask
            h = a
        else:
            h = z
    return h, layer_inputs, hidden_raw


@maybe_njit
def backward_batch(sizes, params, activation, drop_layer, mask,
                   layer_inputs, hidden_raw, out_grad):
    """Exact reverse-mode gradient of sum_i out_grad[i] . out[i] w.r.t. params.

    Consumes the buffers produced by ``forward_batch`` on the same inputs.
    """
    L = sizes.shape[0] - 1
    P = 0
    for l in range(1, L + 1):
        P += (sizes[l - 1] + 1) * sizes[l]
    gparams = np.empty(P, dtype=np.float64)

    # Per-layer offsets into params / trace buffers.
    w_off = np.empty(L + 1, dtype=np.int64)
    in_off = np.empty(L + 1, dtype=np.int64)
    hid_off = np.empty(L + 1, dtype=np.int64)
    off = 0
    io = 0
    ho = 0
    for l in range(1, L + 1):
        w_off[l] = off
        in_off[l] = io
        off += (sizes[l - 1] + 1) * sizes[l]
        io += sizes[l - 1]
        if l < L:
            hid_off[l] = ho
            ho += sizes[l]

    g = out_grad  # dLoss/dz at the current layer, walking backward
    for l in range(L, 0, -1):
        fan_in = sizes[l - 1]
        fan_out = sizes[l]
        inputs_l = np.ascontiguousarray(
            layer_inputs[:, in_off[l]:in_off[l] + fan_in])
        dW = np.dot(inputs_l.T, g)
        gparams[w_off[l]:w_off[l] + fan_in * fan_out] = dW.ravel()
        gparams[w_off[l] + fan_in * fan_out:
                w_off[l] + fan_in * fan_out + fan_out] = np.sum(g, axis=0)
        if l > 1:
            W = params[w_off[l]:w_off[l] + fan_in * fan_out].reshape(fan_in, fan_out)
            gh = np.dot(g, W.T)
            if l - 1 == drop_layer:
                gh = gh * mask
            a = hidden_raw[:, hid_off[l - 1]:hid_off[l - 1] + fan_in]
            if activation == RELU:
                g = gh * (a > 0.0)
            else:
                g = gh * (1.0 - a * a)
    return gparams


@maybe_njit
def _row_max(x):
    n = x.shape[0]
    m = np.empty(n, dtype=np.float64)
    for i in range(n):
        m[i] = np.max(x[i])
    return m


@maybe_njit
def softmax_rows(logits):
    """Row-wise stable softmax (max-logit subtraction)."""
    m = _row_max(logits)
    e = np.exp(logits - m.reshape(-1, 1))
    return e / np.sum(e, axis=1).reshape(-1, 1)


# Regression head loss forms.
MAP_FORM = 0   # per-point (y - mu)^2 / s2 + log s2
NLL_FORM = 1   # exact Gaussian negative log-density

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@maybe_njit
def regression_loss_grad_sum(sizes_mu, params_mu, sizes_sig, params_sig,
                             x, y, activation, drop_layer, mask_mu, mask_sig,
                             form):
    """Summed data-term loss and parameter gradients for the Gaussian head.

    Runs both the mean and log-variance networks forward, differentiates
    the chosen per-point loss form through both, and returns
    (loss_sum, grad_mu, grad_sig).  Prior terms and 1/n or N/n scalings
    are the caller's business.
    """
    mu2d, li_mu, hr_mu = forward_batch(sizes_mu, params_mu, x, activation,
                                       drop_layer, mask_mu)
    ls2d, li_sig, hr_sig = forward_batch(sizes_sig, params_sig, x, activation,
                                         drop_layer, mask_sig)
    mu = mu2d[:, 0]
    logs2 = ls2d[:, 0]
    s2 = np.exp(logs2)
    r = y - mu
    q = r * r / s2
    n = x.shape[0]
    if form == MAP_FORM:
        loss = np.sum(q + logs2)
        dmu = -2.0 * r / s2
        dls2 = 1.0 - q
    else:
        loss = np.sum(0.5 * q + 0.5 * logs2) + _HALF_LOG_2PI * n
        dmu = -r / s2
        dls2 = 0.5 - 0.5 * q
    gmu = backward_batch(sizes_mu, params_mu, activation, drop_layer, mask_mu,
                         li_mu, hr_mu, dmu.reshape(-1, 1))
    gsig = backward_batch(sizes_sig, params_sig, activation, drop_layer,
                          mask_sig, li_sig, hr_sig, dls2.reshape(-1, 1))
    return loss, gmu, gsig


@maybe_njit
def categorical_loss_grad_sum(sizes, params, x, onehot, activation,
                              drop_layer, mask):
    """Summed cross-entropy and parameter gradient for the softmax head.

    The gradient flows through the stable softmax as probs - onehot.
    Returns (loss_sum, grad).
    """
    logits, li, hr = forward_batch(sizes, params, x, activation,
                                   drop_layer, mask)
    m = _row_max(logits)
    shifted = logits - m.reshape(-1, 1)
    e = np.exp(shifted)
    z = np.sum(e, axis=1)
    probs = e / z.reshape(-1, 1)
    # CE_i = logsumexp(logits_i) - logits_i . y_i
    loss = np.sum(np.log(z) + m) - np.sum(logits * onehot)
    grad = backward_batch(sizes, params, activation, drop_layer, mask,
                          li, hr, probs - onehot)
    return loss, grad
