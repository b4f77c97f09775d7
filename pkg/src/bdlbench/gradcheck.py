"""Finite-difference audit of every analytic gradient path.

Five suites cover the two loss surfaces (MAP loss and potential energy)
for both model families plus the raw forward/backward pair.  Each suite
draws random architectures, parameters, and data batches from one
seeded stream, compares the analytic gradient against a central
finite-difference estimate, and records the norm-relative error

    rel_err = ||g_analytic - g_fd|| / max(||g_fd||, 1e-12).

The check passes when every case stays below the tolerance 1e-4.  The
``corrupt`` hook perturbs analytic gradients before comparison so tests
can prove the check actually detects broken gradients.
"""

from dataclasses import dataclass

import numpy as np

from . import models
from .nn_core import (DETERMINISTIC, MlpArchitecture, backward,
                      finite_diff_grad, forward, init_params)

REL_TOL = 1.0e-4
SUITE_NAMES = ("regression-map-loss", "classification-map-loss",
               "regression-potential", "classification-potential",
               "raw-forward")
_ACTIVATIONS = ("relu", "tanh")
_BATCH = 7
_N_TOTAL = 50


@dataclass(frozen=True)
class GradCheckCase:
    suite: str
    instance: int
    rel_error: float


@dataclass
class GradCheckReport:
    cases: list
    tolerance: float

    @property
    def max_rel_error(self):
        return max(c.rel_error for c in self.cases)

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance

    def worst_by_suite(self):
        worst = {}
        for case in self.cases:
            cur = worst.get(case.suite)
            if cur is None or case.rel_error > cur.rel_error:
                worst[case.suite] = case
        return worst

    def text(self):
        per_suite = len(self.cases) // len(SUITE_NAMES)
        lines = [f"gradient check: {len(SUITE_NAMES)} suites x "
                 f"{per_suite} instances, tolerance {self.tolerance:g}"]
        worst = self.worst_by_suite()
        width = max(len(name) for name in SUITE_NAMES)
        for name in SUITE_NAMES:
            case = worst[name]
            lines.append(f"  {name:<{width}}  max rel err {case.rel_error:.3e}"
                         f"  (instance {case.instance})")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"overall: max rel err {self.max_rel_error:.3e} -> "
                     f"{verdict}")
        return "\n".join(lines)


def _rel_error(analytic, fd):
    denom = max(float(np.linalg.norm(fd)), 1.0e-12)
    return float(np.linalg.norm(analytic - fd)) / denom


def _hidden_sizes(rng):
    return int(rng.integers(3, 7)), int(rng.integers(3, 7))


def _regression_setup(rng, instance):
    h1, h2 = _hidden_sizes(rng)
    act = _ACTIVATIONS[instance % 2]
    arch = MlpArchitecture((1, h1, h2, 1), act)
    family = models.GaussianRegressionFamily(arch, arch)
    theta = family.init_params(rng)
    X = rng.uniform(-3.0, 3.0, size=(_BATCH, 1))
    y = rng.standard_normal(_BATCH)
    return family, theta, X, y


def _classification_setup(rng, instance):
    h1, h2 = _hidden_sizes(rng)
    act = _ACTIVATIONS[instance % 2]
    num_classes = 2 + instance % 2
    arch = MlpArchitecture((2, h1, h2, num_classes), act)
    family = models.CategoricalFamily(arch)
    theta = family.init_params(rng)
    X = rng.uniform(-3.0, 3.0, size=(_BATCH, 2))
    onehot = models.one_hot(rng.integers(0, num_classes, size=_BATCH),
                            num_classes)
    return family, theta, X, onehot


def _suite_case(suite, rng, instance):
    """Returns (loss_fn, analytic_grad_fn, theta) for one random instance."""
    if suite == "regression-map-loss":
        family, theta, X, y = _regression_setup(rng, instance)

        def loss(th):
            return models.map_loss_family(family, th, X, y, _N_TOTAL)[0]

        def grad(th):
            return models.map_loss_family(family, th, X, y, _N_TOTAL)[1]

    elif suite == "classification-map-loss":
        family, theta, X, onehot = _classification_setup(rng, instance)

        def loss(th):
            return models.map_loss_family(family, th, X, onehot, _N_TOTAL)[0]

        def grad(th):
            return models.map_loss_family(family, th, X, onehot, _N_TOTAL)[1]

    elif suite == "regression-potential":
        family, theta, X, y = _regression_setup(rng, instance)

        def loss(th):
            return models.potential_energy(family, X, y, th)[0]

        def grad(th):
            return models.potential_energy(family, X, y, th)[1]

    elif suite == "classification-potential":
        family, theta, X, onehot = _classification_setup(rng, instance)

        def loss(th):
            return models.potential_energy(family, X, onehot, th)[0]

        def grad(th):
            return models.potential_energy(family, X, onehot, th)[1]

    elif suite == "raw-forward":
        h1, h2 = _hidden_sizes(rng)
        act = _ACTIVATIONS[instance % 2]
        out_dim = 1 + instance % 3
        arch = MlpArchitecture((2, h1, h2, out_dim), act)
        theta = init_params(arch, rng)
        X = rng.uniform(-2.0, 2.0, size=(3, 2))

        def loss(th):
            total = 0.0
            for x in X:
                out, _ = forward(arch, th, x, DETERMINISTIC)
                total += 0.5 * float(out @ out)
            return total

        def grad(th):
            total = np.zeros_like(th)
            for x in X:
                out, trace = forward(arch, th, x, DETERMINISTIC)
                total += backward(arch, th, trace, out)
            return total

    else:
        raise ValueError(f"unknown suite {suite!r}")
    return loss, grad, theta


def run_gradcheck(seed=0, instances=10, corrupt=None):
    """Run every suite ``instances`` times; returns a GradCheckReport."""
    if instances < 1:
        raise ValueError("instances must be >= 1")
    rng = np.random.default_rng(seed)
    cases = []
    for suite in SUITE_NAMES:
        for instance in range(instances):
            loss, grad, theta = _suite_case(suite, rng, instance)
            analytic = grad(theta)
            if corrupt is not None:
                analytic = corrupt(suite, analytic)
            fd = finite_diff_grad(loss, theta)
            cases.append(GradCheckCase(suite, instance,
                                       _rel_error(analytic, fd)))
    return GradCheckReport(cases, REL_TOL)
