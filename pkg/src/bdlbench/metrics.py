"""Quantitative evaluation of predictive distributions.

Closed-form KL divergences and their grid means, sparsification-error
area (AUSE), calibration-error area (AUCE) from Gaussian prediction
intervals, expected calibration error (ECE) over equal-width confidence
bins, RMSE, Brier score, predictive entropy, and repeat aggregation.
All operations are pure.
"""

import math
from dataclasses import dataclass

import numpy as np

AUCE_LEVELS = np.linspace(0.01, 0.99, 100)

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class EvaluationGrid:
    """Uniform input grid: 1D on [-7, 7] or 2D on [-6, 6] x [-6, 6]."""

    task: str
    resolution: int

    REGRESSION_RANGE = (-7.0, 7.0)
    CLASSIFICATION_RANGE = (-6.0, 6.0)

    def __post_init__(self):
        if self.task not in ("toy-regression", "toy-classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2 (endpoints included)")

    @property
    def points(self):
        if self.task == "toy-regression":
            lo, hi = self.REGRESSION_RANGE
            return np.linspace(lo, hi, self.resolution)
        lo, hi = self.CLASSIFICATION_RANGE
        axis = np.linspace(lo, hi, self.resolution)
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])


@dataclass(frozen=True)
class SparsificationCurve:
    fractions_removed: np.ndarray
    metric_values: np.ndarray
    oracle_values: np.ndarray


@dataclass(frozen=True)
class CalibrationCurve:
    confidence_levels: np.ndarray
    empirical_coverage: np.ndarray


@dataclass(frozen=True)
class ReliabilityBins:
    edges: np.ndarray
    counts: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray


@dataclass(frozen=True)
class MetricAggregate:
    mean: float
    std: float
    repeats: int


def kl_gaussian(p1, p2):
    """KL(N(mu1, s1) || N(mu2, s2)) in closed form."""
    mu1, s1 = p1
    mu2, s2 = p2
    if s1 <= 0 or s2 <= 0:
        raise ValueError("variances must be positive")
    return 0.5 * math.log(s2 / s1) + (s1 + (mu1 - mu2) ** 2) / (2.0 * s2) - 0.5


def kl_categorical(q1, q2):
    """KL(q1 || q2) = sum q1 log(q1/q2), with 0 log 0 = 0."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    if q1.shape != q2.shape:
        raise ValueError("distributions must have equal length")
    support = q1 > 0
    if np.any(q2[support] <= 0):
        raise ValueError("q2 must be positive wherever q1 is")
    terms = q1[support] * (np.log(q1[support]) - np.log(q2[support]))
    return float(terms.sum())


def kl_gaussian_arrays(mu1, s1, mu2, s2):
    """Elementwise Gaussian KL over arrays of (mean, variance) pairs."""
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise ValueError("variances must be positive")
    return 0.5 * np.log(s2 / s1) + (s1 + (mu1 - mu2) ** 2) / (2.0 * s2) - 0.5


def kl_categorical_rows(p, q):
    """Row-wise categorical KL for (n, C) arrays."""
    if p.shape != q.shape:
        raise ValueError("probability arrays must have equal shape")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("q must be positive wherever p is")
    terms = np.zeros_like(p)
    terms[support] = p[support] * (np.log(p[support]) - np.log(q[support]))
    return terms.sum(axis=1)


def mean_kl_to_reference(candidate, reference, grid):
    """Unweighted mean over grid points of KL(candidate || reference).

    ``candidate`` and ``reference`` map the grid's input array to either
    (mu, sigma2) arrays (regression) or an (n, C) probs array
    (classification).
    """
    points = grid.points
    cand = candidate(points)
    ref = reference(points)
    if grid.task == "toy-regression":
        mu1, s1 = cand
        mu2, s2 = ref
        return float(np.mean(kl_gaussian_arrays(mu1, s1, mu2, s2)))
    return float(np.mean(kl_categorical_rows(cand, ref)))


def _aggregate_error(values, aggregate):
    if values.size == 0:
        return 0.0
    if aggregate == "rmse":
        return math.sqrt(float(np.mean(values)))
    return float(np.mean(values))


def ause(per_sample_error, per_sample_uncertainty, aggregate="rmse",
         steps=100):
    """Area under the sparsification-error curve.

    ``per_sample_error`` holds nonnegative per-sample error values:
    squared errors under aggregate "rmse" (the aggregate is then the
    root of their mean) or per-sample scores under "brier-mean" (plain
    mean).  For each fraction f on a uniform grid of steps+1 values in
    [0, 1], the ceil(f*n) most-uncertain samples are removed and the
    aggregate is recomputed; the oracle removes the most-erroneous
    instead.  Both curves are normalized by the fraction-0 aggregate
    (an empty retained set aggregates to 0); their difference is
    integrated by the trapezoid rule.  Zero base error defines AUSE = 0.
    """
    errors = np.asarray(per_sample_error, dtype=np.float64)
    uncertainty = np.asarray(per_sample_uncertainty, dtype=np.float64)
    if errors.shape != uncertainty.shape or errors.ndim != 1:
        raise ValueError("error and uncertainty vectors must match in length")
    n = errors.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    if aggregate not in ("rmse", "brier-mean"):
        raise ValueError(f"unknown aggregate {aggregate!r}")
    if steps < 1:
        raise ValueError("steps must be >= 1")

    fractions = np.linspace(0.0, 1.0, steps + 1)
    by_uncertainty = np.argsort(uncertainty, kind="stable")
    by_error = np.argsort(errors, kind="stable")
    base = _aggregate_error(errors, aggregate)
    values = np.empty(steps + 1)
    oracle = np.empty(steps + 1)
    if base == 0.0:
        values.fill(0.0)
        oracle.fill(0.0)
        curve = SparsificationCurve(fractions, values, oracle)
        return 0.0, curve
    for i, f in enumerate(fractions):
        keep = n - math.ceil(f * n)
        values[i] = _aggregate_error(errors[by_uncertainty[:keep]], aggregate)
        oracle[i] = _aggregate_error(errors[by_error[:keep]], aggregate)
    values /= base
    oracle /= base
    area = float(np.trapezoid(values - oracle, fractions))
    return area, SparsificationCurve(fractions, values, oracle)


def std_normal_cdf(x):
    return 0.5 * math.erfc(-x / SQRT2)


def _std_normal_pdf(x):
    return INV_SQRT_2PI * math.exp(-0.5 * x * x)


# Rational approximation coefficients for the standard normal quantile
# (relative error < 1.15e-9 before refinement).
_Q_A = (-3.969683028665376e+01, 2.209460984245205e+02,
        -2.759285104469687e+02, 1.383577518672690e+02,
        -3.066479806614716e+01, 2.506628277459239e+00)
_Q_B = (-5.447609879822406e+01, 1.615858368580409e+02,
        -1.556989798598866e+02, 6.680131188771972e+01,
        -1.328068155288572e+01)
_Q_C = (-7.784894002430293e-03, -3.223964580411365e-01,
        -2.400758277161838e+00, -2.549732539343734e+00,
        4.374664141464968e+00, 2.938163982698783e+00)
_Q_D = (7.784695709041462e-03, 3.224671290700398e-01,
        2.445134137142996e+00, 3.754408661907416e+00)
_Q_LOW = 0.02425


def std_normal_quantile(q):
    """Inverse standard-normal CDF, |error| < 1e-9.

    Rational approximation in three regimes, then a single Newton step
    on the CDF (computed via erfc) to polish the root.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("quantile argument must lie in (0, 1)")
    a, b, c, d = _Q_A, _Q_B, _Q_C, _Q_D
    if q < _Q_LOW:
        u = math.sqrt(-2.0 * math.log(q))
        x = ((((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u
              + c[5])
             / ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0))
    elif q <= 1.0 - _Q_LOW:
        u = q - 0.5
        t = u * u
        x = ((((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t
              + a[5]) * u
             / (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t
                + 1.0))
    else:
        u = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -((((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u
               + c[5])
              / ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0))
    err = std_normal_cdf(x) - q
    return x - err / _std_normal_pdf(x)


def _gaussian_prediction_arrays(predictions):
    if isinstance(predictions, tuple) and len(predictions) == 2:
        mu = np.asarray(predictions[0], dtype=np.float64)
        sigma2 = np.asarray(predictions[1], dtype=np.float64)
    else:
        mu = np.array([p.mu_hat for p in predictions], dtype=np.float64)
        sigma2 = np.array([p.sigma2_hat for p in predictions],
                          dtype=np.float64)
    if mu.shape != sigma2.shape or mu.ndim != 1:
        raise ValueError("need matching flat mu and sigma2 vectors")
    if np.any(sigma2 < 0):
        raise ValueError("variances must be nonnegative")
    return mu, sigma2


def auce(predictions, targets):
    """Area under the calibration-error curve for Gaussian predictions.

    For each confidence level p in 100 equally spaced values from 0.01
    to 0.99, the central interval mu +- z*sigma with
    z = quantile((p+1)/2) is formed and its empirical coverage p-hat
    measured; AUCE is the mean of |p - p-hat|.  A zero-variance
    prediction covers only its exact mean.  ``predictions`` is a list of
    PredictiveGaussian or a (mu, sigma2) array pair.
    """
    mu, sigma2 = _gaussian_prediction_arrays(predictions)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != mu.shape:
        raise ValueError("targets must match predictions in length")
    if mu.size == 0:
        raise ValueError("need at least one prediction")
    sigma = np.sqrt(sigma2)
    abs_residual = np.abs(targets - mu)
    coverage = np.empty(AUCE_LEVELS.size)
    for i, level in enumerate(AUCE_LEVELS):
        z = std_normal_quantile((level + 1.0) / 2.0)
        coverage[i] = np.mean(abs_residual <= z * sigma)
    value = float(np.mean(np.abs(AUCE_LEVELS - coverage)))
    return value, CalibrationCurve(AUCE_LEVELS.copy(), coverage)


def _categorical_prediction_array(predictions):
    if isinstance(predictions, np.ndarray):
        probs = np.asarray(predictions, dtype=np.float64)
    else:
        probs = np.stack([p.probs for p in predictions])
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValueError("need an (n, C >= 2) probability array")
    return probs


def ece(predictions, labels, num_bins=10):
    """Expected calibration error over equal-width max-confidence bins.

    Confidence is the maximum predicted probability, binned into
    ``num_bins`` equal-width bins covering (1/C, 1]; the first bin also
    admits confidence exactly 1/C.  ECE is the count-weighted mean of
    |accuracy - mean confidence| over non-empty bins.
    """
    probs = _categorical_prediction_array(predictions)
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = probs.shape
    if labels.shape != (n,) or n == 0:
        raise ValueError("labels must match predictions in length (>= 1)")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError(f"labels outside range [0, {num_classes})")
    if num_bins < 1:
        raise ValueError("bin count must be >= 1")
    confidence = probs.max(axis=1)
    predicted = probs.argmax(axis=1)
    correct = predicted == labels
    lo = 1.0 / num_classes
    width = (1.0 - lo) / num_bins
    idx = np.minimum(((confidence - lo) / width).astype(np.int64),
                     num_bins - 1)
    idx = np.maximum(idx, 0)
    counts = np.bincount(idx, minlength=num_bins)
    conf_sums = np.bincount(idx, weights=confidence, minlength=num_bins)
    acc_sums = np.bincount(idx, weights=correct.astype(np.float64),
                           minlength=num_bins)
    nonzero = counts > 0
    mean_conf = np.zeros(num_bins)
    accuracy = np.zeros(num_bins)
    mean_conf[nonzero] = conf_sums[nonzero] / counts[nonzero]
    accuracy[nonzero] = acc_sums[nonzero] / counts[nonzero]
    value = float(np.sum(counts[nonzero] / n
                         * np.abs(accuracy[nonzero] - mean_conf[nonzero])))
    edges = lo + width * np.arange(num_bins + 1)
    return value, ReliabilityBins(edges, counts, mean_conf, accuracy)


def rmse(predicted, targets):
    predicted = np.asarray(predicted, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predicted.shape != targets.shape or predicted.ndim != 1:
        raise ValueError("vectors must match in length")
    if predicted.size == 0:
        raise ValueError("need at least one sample")
    return float(np.sqrt(np.mean((predicted - targets) ** 2)))


def brier_and_entropy(prediction, label):
    """Per-sample Brier score and predictive entropy (natural log)."""
    probs = np.asarray(prediction.probs, dtype=np.float64)
    if not 0 <= label < probs.size:
        raise ValueError("label outside the class range")
    onehot = np.zeros(probs.size)
    onehot[label] = 1.0
    brier = float(np.sum((probs - onehot) ** 2))
    support = probs > 0
    entropy = float(-np.sum(probs[support] * np.log(probs[support])))
    return brier, entropy


def brier_scores(probs, labels):
    """Row-wise Brier scores for an (n, C) probability array."""
    probs = _categorical_prediction_array(probs)
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros_like(probs)
    onehot[np.arange(probs.shape[0]), labels] = 1.0
    return np.sum((probs - onehot) ** 2, axis=1)


def entropies(probs):
    """Row-wise predictive entropies for an (n, C) probability array."""
    probs = _categorical_prediction_array(probs)
    terms = np.zeros_like(probs)
    support = probs > 0
    terms[support] = probs[support] * np.log(probs[support])
    return -terms.sum(axis=1)


def aggregate_repeats(values):
    """Sample mean and standard deviation (ddof 1; 0 for a single repeat)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 1:
        raise ValueError("need at least one repeat value")
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return MetricAggregate(mean, std, values.size)


def save_sparsification_curve(path, curve):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("fraction,value,oracle\n")
        for f, v, o in zip(curve.fractions_removed, curve.metric_values,
                           curve.oracle_values):
            fh.write(f"{f:.17g},{v:.17g},{o:.17g}\n")


def save_calibration_curve(path, curve):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("p,p_hat\n")
        for p, cov in zip(curve.confidence_levels, curve.empirical_coverage):
            fh.write(f"{p:.17g},{cov:.17g}\n")


def save_reliability_bins(path, bins):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bin,count,conf,acc\n")
        for b in range(bins.counts.size):
            fh.write(f"{b},{bins.counts[b]},{bins.mean_confidence[b]:.17g},"
                     f"{bins.accuracy[b]:.17g}\n")
