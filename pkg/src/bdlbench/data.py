"""Toy data generation and CSV fixture I/O.

Regression draws x uniformly on [-3, 3] and y ~ N(mu(x), sigma(x)^2)
with mu(x) = sin(x) and sigma(x) = 0.15 / (1 + exp(-x)).  The binary
classification problem draws inputs uniformly on [0, 3] x [-3, 3] and
labels them by the deterministic rule

    label = 1  iff  x2 >= 1.5 * sin(pi * x1 / 3)

keeping exactly n_per_class points per class.

CSV schemas (header row, one record per line):
  regression fixture:      mu,sigma2,target
  classification fixture:  p_0,...,p_{C-1},label
  dataset:                 x_0[,x_1],y
"""

import csv
from dataclasses import dataclass

import numpy as np

REGRESSION_X_RANGE = (-3.0, 3.0)
CLASSIFICATION_X1_RANGE = (0.0, 3.0)
CLASSIFICATION_X2_RANGE = (-3.0, 3.0)


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    seed: int = None
    generator: str = "unknown"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs.reshape(-1, 1)
        self.targets = np.asarray(self.targets)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have equal length")

    @property
    def size(self):
        return self.inputs.shape[0]


@dataclass
class RegressionFixture:
    mu: np.ndarray
    sigma2: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma2 = np.asarray(self.sigma2, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if not (self.mu.shape == self.sigma2.shape == self.targets.shape):
            raise ValueError("mu, sigma2, target columns must match in length")
        if np.any(self.sigma2 <= 0):
            raise ValueError("fixture field sigma2 must be positive")


@dataclass
class ClassificationFixture:
    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.probs.ndim != 2 or self.probs.shape[1] < 2:
            raise ValueError("fixture field probs must be (n, C >= 2)")
        if self.labels.shape != (self.probs.shape[0],):
            raise ValueError("probs and label columns must match in length")
        if np.any(self.probs < 0):
            raise ValueError("fixture field probs must be nonnegative")
        if np.any(np.abs(self.probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("fixture field probs must sum to 1 (tol 1e-9)")
        C = self.probs.shape[1]
        if np.any(self.labels < 0) or np.any(self.labels >= C):
            raise ValueError(f"fixture field label outside range [0, {C})")


def regression_truth(x):
    """Exact (mu, sigma2) of the regression generator at inputs x."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.sin(x)
    sigma = 0.15 / (1.0 + np.exp(-x))
    return mu, sigma ** 2


def classification_rule(inputs):
    """Deterministic class labels of the 2D generator (0 or 1 per row)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != 2:
        raise ValueError("classification inputs must be (n, 2)")
    boundary = 1.5 * np.sin(np.pi * inputs[:, 0] / 3.0)
    return (inputs[:, 1] >= boundary).astype(np.int64)


def classification_truth(inputs):
    """One-hot label probabilities of the deterministic rule, shape (n, 2)."""
    labels = classification_rule(inputs)
    probs = np.zeros((labels.size, 2))
    probs[np.arange(labels.size), labels] = 1.0
    return probs


def gen_toy_regression(n, rng, x_range=REGRESSION_X_RANGE, seed=None):
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = x_range
    x = rng.uniform(lo, hi, size=n)
    mu, sigma2 = regression_truth(x)
    y = mu + np.sqrt(sigma2) * rng.standard_normal(n)
    return Dataset(x.reshape(-1, 1), y, seed, "toy-regression")


def gen_toy_classification(n_per_class=520, rng=None, seed=None):
    """Uniform draws on the training region, kept until both class
    quotas are exactly filled (draw order preserved, overflow skipped)."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    need = [n_per_class, n_per_class]
    rows = []
    labels = []
    while need[0] > 0 or need[1] > 0:
        chunk = np.column_stack([
            rng.uniform(*CLASSIFICATION_X1_RANGE, size=256),
            rng.uniform(*CLASSIFICATION_X2_RANGE, size=256),
        ])
        for row, label in zip(chunk, classification_rule(chunk)):
            if need[label] > 0:
                rows.append(row)
                labels.append(label)
                need[label] -= 1
    return Dataset(np.array(rows), np.array(labels, dtype=np.int64), seed,
                   "toy-classification")


def _parse_float(text, path, line_no, field):
    try:
        return float(text)
    except ValueError:
        raise ValueError(
            f"{path}:{line_no}: field {field} is not a number: {text!r}"
        ) from None


def save_fixture(path, fixture):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if isinstance(fixture, RegressionFixture):
            fh.write("mu,sigma2,target\n")
            for m, s, t in zip(fixture.mu, fixture.sigma2, fixture.targets):
                fh.write(f"{m:.17g},{s:.17g},{t:.17g}\n")
        elif isinstance(fixture, ClassificationFixture):
            C = fixture.probs.shape[1]
            fh.write(",".join(f"p_{k}" for k in range(C)) + ",label\n")
            for p_row, label in zip(fixture.probs, fixture.labels):
                cells = [f"{v:.17g}" for v in p_row] + [str(int(label))]
                fh.write(",".join(cells) + "\n")
        else:
            raise TypeError(f"unsupported fixture type {type(fixture).__name__}")


def load_fixture(path):
    """Parse a fixture CSV; the header row selects the schema."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: empty fixture file") from None
        header = [h.strip() for h in header]
        if header == ["mu", "sigma2", "target"]:
            return _load_regression_rows(path, reader)
        if (len(header) >= 3 and header[-1] == "label"
                and all(h == f"p_{k}" for k, h in enumerate(header[:-1]))):
            return _load_classification_rows(path, reader, len(header) - 1)
        raise ValueError(f"{path}:1: unrecognized fixture header {header!r}")


def _load_regression_rows(path, reader):
    mu, sigma2, targets = [], [], []
    for line_no, row in enumerate(reader, start=2):
        if len(row) != 3:
            raise ValueError(f"{path}:{line_no}: expected 3 fields, "
                             f"got {len(row)}")
        s = _parse_float(row[1], path, line_no, "sigma2")
        if s <= 0:
            raise ValueError(f"{path}:{line_no}: field sigma2 must be "
                             f"positive, got {s}")
        mu.append(_parse_float(row[0], path, line_no, "mu"))
        sigma2.append(s)
        targets.append(_parse_float(row[2], path, line_no, "target"))
    if not mu:
        raise ValueError(f"{path}: fixture has no data rows")
    return RegressionFixture(np.array(mu), np.array(sigma2),
                             np.array(targets))


def _load_classification_rows(path, reader, num_classes):
    probs, labels = [], []
    for line_no, row in enumerate(reader, start=2):
        if len(row) != num_classes + 1:
            raise ValueError(f"{path}:{line_no}: expected "
                             f"{num_classes + 1} fields, got {len(row)}")
        p = [_parse_float(row[k], path, line_no, f"p_{k}")
             for k in range(num_classes)]
        if any(v < 0 for v in p):
            raise ValueError(f"{path}:{line_no}: field p_* must be "
                             f"nonnegative")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ValueError(f"{path}:{line_no}: field p_* must sum to 1, "
                             f"got {sum(p)!r}")
        try:
            label = int(row[num_classes])
        except ValueError:
            raise ValueError(f"{path}:{line_no}: field label is not an "
                             f"integer: {row[num_classes]!r}") from None
        if not 0 <= label < num_classes:
            raise ValueError(f"{path}:{line_no}: field label outside "
                             f"range [0, {num_classes})")
        probs.append(p)
        labels.append(label)
    if not probs:
        raise ValueError(f"{path}: fixture has no data rows")
    return ClassificationFixture(np.array(probs), np.array(labels))


def save_dataset(path, dataset):
    inputs = dataset.inputs
    with open(path, "w", encoding="utf-8", newline="") as fh:
        cols = [f"x_{j}" for j in range(inputs.shape[1])] + ["y"]
        fh.write(",".join(cols) + "\n")
        integral = np.issubdtype(dataset.targets.dtype, np.integer)
        for i in range(dataset.size):
            cells = [f"{v:.17g}" for v in inputs[i]]
            cells.append(str(int(dataset.targets[i])) if integral
                         else f"{dataset.targets[i]:.17g}")
            fh.write(",".join(cells) + "\n")


def load_dataset(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: empty dataset file") from None
        header = [h.strip() for h in header]
        if (header[-1] != "y"
                or any(h != f"x_{j}" for j, h in enumerate(header[:-1]))):
            raise ValueError(f"{path}:1: unrecognized dataset header "
                             f"{header!r}")
        dim = len(header) - 1
        rows, ys = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise ValueError(f"{path}:{line_no}: expected {dim + 1} "
                                 f"fields, got {len(row)}")
            rows.append([_parse_float(row[j], path, line_no, f"x_{j}")
                         for j in range(dim)])
            ys.append(_parse_float(row[dim], path, line_no, "y"))
    if not rows:
        raise ValueError(f"{path}: dataset has no data rows")
    return Dataset(np.array(rows), np.array(ys), None, "file")
