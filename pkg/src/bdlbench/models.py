"""Probabilistic output heads and MAP training losses.

Two model families: a Gaussian regression head realized by two separate
networks (mean and log-variance), and a categorical head realized by one
softmax network.  The regression MAP loss is

    (1/n) sum_i [(y_i - mu_i)^2 / s2_i + log s2_i] + (1/N) theta.theta

and the classification MAP loss is batch-mean cross-entropy plus
(1/2N) theta.theta, with theta spanning all parameters of the family.
The potential energy U(theta) used by the samplers is the un-normalized
full-data negative log joint: sum_i NLL_i + theta.theta / 2 (unit
Gaussian prior).
"""

from dataclasses import dataclass

import numpy as np

from . import nn_core, nn_kernels
from .nn_core import DETERMINISTIC, MC_DROPOUT, TRAIN
from .nn_kernels import NO_MASK


class NonFiniteLossError(ArithmeticError):
    """A loss or potential evaluated to NaN or infinity."""


@dataclass(frozen=True)
class GaussianPrediction:
    mu: float
    log_sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.log_sigma2)):
            raise ValueError("Gaussian prediction has non-finite fields")

    @property
    def sigma2(self):
        return float(np.exp(self.log_sigma2))


@dataclass(frozen=True)
class CategoricalPrediction:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("probs must be a vector over >= 2 classes")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must lie on the simplex (tolerance 1e-12)")
        object.__setattr__(self, "probs", probs)


@dataclass
class GaussianModel:
    arch_mu: nn_core.MlpArchitecture
    arch_sigma: nn_core.MlpArchitecture
    params_mu: np.ndarray
    params_sigma: np.ndarray

    def __post_init__(self):
        if self.arch_mu.input_dim != self.arch_sigma.input_dim:
            raise ValueError("mean and variance networks must share the input dim")
        if self.arch_mu.output_dim != 1 or self.arch_sigma.output_dim != 1:
            raise ValueError("both head networks must have scalar output")
        self.params_mu = nn_core.check_params(self.arch_mu, self.params_mu)
        self.params_sigma = nn_core.check_params(self.arch_sigma, self.params_sigma)


@dataclass
class CategoricalModel:
    arch: nn_core.MlpArchitecture
    params: np.ndarray

    def __post_init__(self):
        if self.arch.output_dim < 2:
            raise ValueError("categorical model needs >= 2 classes")
        self.params = nn_core.check_params(self.arch, self.params)

    @property
    def num_classes(self):
        return self.arch.output_dim


def predict_gaussian(model, x, mode=DETERMINISTIC, rng=None):
    mu, _ = nn_core.forward(model.arch_mu, model.params_mu, x, mode, rng)
    log_s2, _ = nn_core.forward(model.arch_sigma, model.params_sigma, x, mode, rng)
    return GaussianPrediction(float(mu[0]), float(log_s2[0]))


def predict_categorical(model, x, mode=DETERMINISTIC, rng=None):
    logits, _ = nn_core.forward(model.arch, model.params, x, mode, rng)
    probs = nn_kernels.softmax_rows(logits.reshape(1, -1))[0]
    return CategoricalPrediction(probs)


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1D vector of class indices")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError(f"labels outside range [0, {num_classes})")
    out = np.zeros((labels.size, num_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


def _require_finite(value, what):
    if not np.isfinite(value):
        raise NonFiniteLossError(f"{what} evaluated to {value!r}")
    return float(value)


class GaussianRegressionFamily:
    """Joint parameter handling for the two-network Gaussian head.

    The flat family vector theta is the concatenation (params_mu,
    params_sigma); all losses and potentials below are functions of it.
    """

    kind = "gaussian-regression"

    def __init__(self, arch_mu, arch_sigma):
        if arch_mu.input_dim != arch_sigma.input_dim:
            raise ValueError("mean and variance networks must share the input dim")
        self.arch_mu = arch_mu
        self.arch_sigma = arch_sigma
        self.p_mu = arch_mu.param_count
        self.p_sigma = arch_sigma.param_count
        self.param_count = self.p_mu + self.p_sigma

    def init_params(self, rng):
        return np.concatenate([nn_core.init_params(self.arch_mu, rng),
                               nn_core.init_params(self.arch_sigma, rng)])

    def split(self, theta):
        return theta[:self.p_mu], theta[self.p_mu:]

    def to_model(self, theta):
        pmu, psig = self.split(theta)
        return GaussianModel(self.arch_mu, self.arch_sigma, pmu.copy(), psig.copy())

    def _masks(self, n, mode, rng):
        if mode == DETERMINISTIC or self.arch_mu.dropout is None:
            return NO_MASK, NO_MASK, -1
        if rng is None:
            raise ValueError(f"mode {mode!r} needs an rng to sample dropout masks")
        return (nn_core.sample_mask(self.arch_mu, n, rng),
                nn_core.sample_mask(self.arch_sigma, n, rng),
                self.arch_mu.drop_layer)

    def data_sum_grad(self, theta, X, y, form, mode=DETERMINISTIC, rng=None):
        """Summed data term of the chosen form and its gradient in theta."""
        if X.shape[0] == 0:
            return 0.0, np.zeros(self.param_count)
        pmu, psig = self.split(theta)
        mask_mu, mask_sig, drop_layer = self._masks(X.shape[0], mode, rng)
        loss, gmu, gsig = nn_kernels.regression_loss_grad_sum(
            self.arch_mu.sizes, pmu, self.arch_sigma.sizes, psig,
            X, y, self.arch_mu.activation_code, drop_layer,
            mask_mu, mask_sig, form)
        return loss, np.concatenate([gmu, gsig])

    def predict_batch(self, theta, X, mode=DETERMINISTIC, rng=None):
        """Per-row (mu, log_sigma2) arrays for a batch of inputs."""
        pmu, psig = self.split(theta)
        mask_mu, mask_sig, drop_layer = self._masks(X.shape[0], mode, rng)
        mu = nn_kernels.forward_only(self.arch_mu.sizes, pmu, X,
                                     self.arch_mu.activation_code,
                                     drop_layer, mask_mu)
        ls2 = nn_kernels.forward_only(self.arch_sigma.sizes, psig, X,
                                      self.arch_sigma.activation_code,
                                      drop_layer, mask_sig)
        return mu[:, 0], ls2[:, 0]


class CategoricalFamily:
    """Flat parameter handling for the softmax classification head."""

    kind = "categorical"

    def __init__(self, arch):
        if arch.output_dim < 2:
            raise ValueError("categorical family needs >= 2 classes")
        self.arch = arch
        self.num_classes = arch.output_dim
        self.param_count = arch.param_count

    def init_params(self, rng):
        return nn_core.init_params(self.arch, rng)

    def to_model(self, theta):
        return CategoricalModel(self.arch, theta.copy())

    def _mask(self, n, mode, rng):
        if mode == DETERMINISTIC or self.arch.dropout is None:
            return NO_MASK, -1
        if rng is None:
            raise ValueError(f"mode {mode!r} needs an rng to sample dropout masks")
        return nn_core.sample_mask(self.arch, n, rng), self.arch.drop_layer

    def data_sum_grad(self, theta, X, onehot, form=None, mode=DETERMINISTIC,
                      rng=None):
        """Summed cross-entropy (the categorical NLL) and its gradient."""
        if X.shape[0] == 0:
            return 0.0, np.zeros(self.param_count)
        mask, drop_layer = self._mask(X.shape[0], mode, rng)
        return nn_kernels.categorical_loss_grad_sum(
            self.arch.sizes, theta, X, onehot, self.arch.activation_code,
            drop_layer, mask)

    def predict_batch(self, theta, X, mode=DETERMINISTIC, rng=None):
        """Per-row class probabilities for a batch of inputs."""
        mask, drop_layer = self._mask(X.shape[0], mode, rng)
        logits = nn_kernels.forward_only(self.arch.sizes, theta, X,
                                         self.arch.activation_code,
                                         drop_layer, mask)
        return nn_kernels.softmax_rows(logits)


def map_loss_regression(model, X, y, n_total, mode=TRAIN, rng=None):
    """Batch-mean regression MAP loss and gradients for both networks.

    The prior term (1/N) theta.theta spans the concatenation of both
    parameter vectors; N is the full-dataset size.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError("batch must be non-empty with matching inputs/targets")
    if n_total < X.shape[0]:
        raise ValueError("full-dataset size N cannot be below the batch size")
    family = GaussianRegressionFamily(model.arch_mu, model.arch_sigma)
    theta = np.concatenate([model.params_mu, model.params_sigma])
    data_sum, grad = family.data_sum_grad(theta, X, y, nn_kernels.MAP_FORM,
                                          mode, rng)
    n = X.shape[0]
    loss = data_sum / n + theta @ theta / n_total
    grad = grad / n + (2.0 / n_total) * theta
    _require_finite(loss, "regression MAP loss")
    return loss, family.split(grad)


def map_loss_classification(model, X, onehot, n_total, mode=TRAIN, rng=None):
    """Batch-mean cross-entropy plus (1/2N) theta.theta, with gradient."""
    X = np.asarray(X, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if X.shape[0] != onehot.shape[0] or X.shape[0] < 1:
        raise ValueError("batch must be non-empty with matching inputs/labels")
    if onehot.shape[1] != model.num_classes:
        raise ValueError("one-hot labels do not match the class count")
    if n_total < X.shape[0]:
        raise ValueError("full-dataset size N cannot be below the batch size")
    family = CategoricalFamily(model.arch)
    theta = model.params
    data_sum, grad = family.data_sum_grad(theta, X, onehot, mode=mode, rng=rng)
    n = X.shape[0]
    loss = data_sum / n + theta @ theta / (2.0 * n_total)
    grad = grad / n + theta / n_total
    _require_finite(loss, "classification MAP loss")
    return loss, grad


def map_loss_family(family, theta, X, targets, n_total, mode=TRAIN, rng=None):
    """MAP batch loss and gradient over a family's flat parameter vector.

    Same quantities as ``map_loss_regression`` / ``map_loss_classification``
    but keyed on the family object, for training loops that never split
    theta.
    """
    n = X.shape[0]
    if n < 1:
        raise ValueError("batch must be non-empty")
    if n_total < n:
        raise ValueError("full-dataset size N cannot be below the batch size")
    if family.kind == "gaussian-regression":
        data_sum, grad = family.data_sum_grad(theta, X, targets,
                                              nn_kernels.MAP_FORM, mode, rng)
        loss = data_sum / n + theta @ theta / n_total
        grad = grad / n + (2.0 / n_total) * theta
    else:
        data_sum, grad = family.data_sum_grad(theta, X, targets, mode=mode,
                                              rng=rng)
        loss = data_sum / n + theta @ theta / (2.0 * n_total)
        grad = grad / n + theta / n_total
    _require_finite(loss, "MAP loss")
    return loss, grad


def potential_energy(family, X, targets, theta):
    """U(theta) = sum_i NLL_i + theta.theta / 2, with exact gradient.

    ``targets`` is the target vector for regression or a one-hot matrix
    for classification.  The data term is the full-dataset sum,
    un-normalized.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if isinstance(family, GaussianRegressionFamily):
        nll, grad = family.data_sum_grad(theta, X, targets, nn_kernels.NLL_FORM)
    else:
        nll, grad = family.data_sum_grad(theta, X, targets)
    u = nll + 0.5 * theta @ theta
    _require_finite(u, "potential energy")
    return u, grad + theta
