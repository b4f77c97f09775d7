"""Predictive distributions from posterior samples.

A set of M parameter samples induces, at every input x, a uniform
mixture of the per-sample head predictions.  Classification averages the
probability vectors; regression collapses the Gaussian mixture to a
single Gaussian by moment matching:

    mu_hat = (1/M) sum_i mu_i
    sigma2_hat = (1/M) sum_i [(mu_i - mu_hat)^2 + sigma2_i]

Curves over an input grid serialize to CSV: ``x,mu_hat,sigma2_hat`` for
regression, ``x1,x2,p_0,...,p_{C-1}`` for classification.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import models, samplers
from .nn_core import MC_DROPOUT


@dataclass(frozen=True)
class PredictiveGaussian:
    mu_hat: float
    sigma2_hat: float

    def __post_init__(self):
        if not (np.isfinite(self.mu_hat) and np.isfinite(self.sigma2_hat)):
            raise ValueError("predictive Gaussian has non-finite fields")
        if self.sigma2_hat <= 0:
            raise ValueError("predictive variance must be positive")


@dataclass(frozen=True)
class PredictiveCategorical:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("probs must be a vector over >= 2 classes")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must lie on the simplex (tolerance 1e-12)")
        object.__setattr__(self, "probs", probs)


def collapse_gaussian_mixture(components):
    """Moment-match a uniform mixture of Gaussians to a single Gaussian."""
    if len(components) == 0:
        raise ValueError("cannot collapse an empty mixture")
    mus = np.array([c.mu for c in components], dtype=np.float64)
    sigma2s = np.array([c.sigma2 for c in components], dtype=np.float64)
    mu_hat = float(mus.mean())
    sigma2_hat = float(np.mean((mus - mu_hat) ** 2 + sigma2s))
    return PredictiveGaussian(mu_hat, sigma2_hat)


def average_categorical(components):
    """Arithmetic mean of the component probability vectors."""
    if len(components) == 0:
        raise ValueError("cannot average an empty component list")
    num_classes = components[0].probs.size
    for c in components:
        if c.probs.size != num_classes:
            raise ValueError("components disagree on the class count")
    stacked = np.stack([c.probs for c in components])
    return PredictiveCategorical(stacked.mean(axis=0))


def collapse_gaussian_mixture_arrays(mus, sigma2s):
    """Vectorized collapse over axis 0; returns (mu_hat, sigma2_hat) arrays."""
    mus = np.asarray(mus, dtype=np.float64)
    sigma2s = np.asarray(sigma2s, dtype=np.float64)
    if mus.shape != sigma2s.shape or mus.ndim != 2 or mus.shape[0] < 1:
        raise ValueError("need matching (M >= 1, n) component arrays")
    mu_hat = mus.mean(axis=0)
    sigma2_hat = np.mean((mus - mu_hat) ** 2 + sigma2s, axis=0)
    return mu_hat, sigma2_hat


def _as_input_matrix(x_grid, input_dim):
    X = np.asarray(x_grid, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != input_dim:
        raise ValueError(f"grid must be (n, {input_dim}) or flat when 1D")
    return X


def posterior_predict(source, x_grid, family=None, num_passes=None, rng=None):
    """Per-grid-point predictive distribution from a posterior source.

    ``source`` is either a PosteriorSampleSet (with ``family`` giving the
    parameter layout; every sample is evaluated deterministically) or a
    trained dropout model (``num_passes`` stochastic forward passes with
    ``rng``).  Returns (mu_hat, sigma2_hat) arrays for regression and a
    (n, C) probs array for classification.
    """
    if isinstance(source, samplers.PosteriorSampleSet):
        if family is None:
            raise ValueError("a sample set needs the model family")
        X = _as_input_matrix(x_grid, family_input_dim(family))
        m_total = source.num_samples
        if family.kind == "gaussian-regression":
            mus = np.empty((m_total, X.shape[0]))
            sigma2s = np.empty((m_total, X.shape[0]))
            for i in range(m_total):
                mu, log_s2 = family.predict_batch(source.samples[i], X)
                mus[i] = mu
                sigma2s[i] = np.exp(log_s2)
            return collapse_gaussian_mixture_arrays(mus, sigma2s)
        total = np.zeros((X.shape[0], family.num_classes))
        for i in range(m_total):
            total += family.predict_batch(source.samples[i], X)
        return total / m_total
    if isinstance(source, models.GaussianModel):
        X = _as_input_matrix(x_grid, source.arch_mu.input_dim)
        if num_passes is None or rng is None:
            raise ValueError("a dropout model needs num_passes and rng")
        mu, log_s2 = samplers.mc_dropout_posterior(source, X, num_passes, rng)
        return collapse_gaussian_mixture_arrays(mu, np.exp(log_s2))
    if isinstance(source, models.CategoricalModel):
        X = _as_input_matrix(x_grid, source.arch.input_dim)
        if num_passes is None or rng is None:
            raise ValueError("a dropout model needs num_passes and rng")
        if source.arch.dropout is None:
            raise ValueError("model architecture carries no dropout spec")
        family = models.CategoricalFamily(source.arch)
        total = np.zeros((X.shape[0], source.num_classes))
        for _ in range(num_passes):
            total += family.predict_batch(source.params, X, MC_DROPOUT, rng)
        return total / num_passes
    raise TypeError(f"unsupported source type {type(source).__name__}")


def family_input_dim(family):
    if family.kind == "gaussian-regression":
        return family.arch_mu.input_dim
    return family.arch.input_dim


def save_gaussian_curve(path, x, mu_hat, sigma2_hat):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not (x.shape == mu_hat.shape == sigma2_hat.shape):
        raise ValueError("x, mu_hat, sigma2_hat must have equal lengths")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,mu_hat,sigma2_hat\n")
        for i in range(x.size):
            fh.write(f"{x[i]:.17g},{mu_hat[i]:.17g},{sigma2_hat[i]:.17g}\n")


def load_gaussian_curve(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns (x, mu_hat, sigma2_hat)")
    return data[:, 0], data[:, 1], data[:, 2]


def save_categorical_curve(path, x_grid, probs):
    X = np.asarray(x_grid, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if X.ndim != 2 or probs.ndim != 2 or X.shape[0] != probs.shape[0]:
        raise ValueError("need (n, d) inputs and (n, C) probabilities")
    num_classes = probs.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        cols = [f"x{j + 1}" for j in range(X.shape[1])]
        cols += [f"p_{k}" for k in range(num_classes)]
        fh.write(",".join(cols) + "\n")
        for i in range(X.shape[0]):
            row = [f"{v:.17g}" for v in X[i]] + [f"{v:.17g}" for v in probs[i]]
            fh.write(",".join(row) + "\n")


def load_categorical_curve(path, input_dim=2):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] <= input_dim + 1:
        raise ValueError(f"{path}: too few columns for {input_dim}D inputs")
    return data[:, :input_dim], data[:, input_dim:]
