"""Acceptance gate: the eight shipping criteria.

Each criterion is one test that prints a single PASS/FAIL line (through
pytest's capture, so it is visible live) and then asserts both the
substance and its runtime budget.  Criteria 5 and 7 share one desk-scale
regression run; criterion 6 runs the classification counterpart.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from bdlbench import cli, metrics, predictive, samplers
from bdlbench.experiment import parse_config, run_experiment
from bdlbench.gradcheck import run_gradcheck
from bdlbench.models import GaussianPrediction

M_SWEEP = (8, 16, 32, 64)

DESK_REGRESSION = {
    "schema_version": 1,
    "task": "toy-regression",
    "seed": 1,
    "M_values": list(M_SWEEP),
    "scale_factor": 64,
    "methods": {
        "ensembling": {"epochs": 300},
        "mc-dropout": {},
        "sgld": {"alpha0": 1e-05},
        "sghmc": {"alpha0": 1e-06},
    },
}

DESK_CLASSIFICATION = {
    "schema_version": 1,
    "task": "toy-classification",
    "seed": 1,
    "M_values": list(M_SWEEP),
    "scale_factor": 64,
    "methods": {"ensembling": {}, "mc-dropout": {}},
}

DETERMINISM_CONFIG = {
    "schema_version": 1,
    "task": "toy-regression",
    "seed": 2,
    "grid_resolution": 200,
    "dataset": {"n": 200},
    "hmc": {"num_samples": 60, "warmup_steps": 60, "leapfrog_steps": 10},
    "M_values": [4, 8],
    "methods": {
        "ensembling": {"pool": 8, "epochs": 20},
        "sgld": {"repeats": 2, "alpha0": 1e-5, "T": 400},
    },
}


def _announce(capsys, num, ok, detail, elapsed, budget):
    with capsys.disabled():
        print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'}  {detail}  "
              f"[{elapsed:.1f}s / budget {budget:.0f}s]")


def _report_table(out_dir):
    table = {}
    for line in (out_dir / "report.csv").read_text().splitlines()[1:]:
        _, method, m, _, mean, std, _ = line.split(",")
        table[(method, int(m))] = (float(mean), float(std))
    return table


@pytest.fixture(scope="module")
def regression_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_regression")
    t0 = time.perf_counter()
    manifest = run_experiment(parse_config(DESK_REGRESSION), out_dir=out,
                              curves="reference")
    elapsed = time.perf_counter() - t0
    return {"table": _report_table(out), "manifest": manifest,
            "elapsed": elapsed}


@pytest.fixture(scope="module")
def classification_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_classification")
    t0 = time.perf_counter()
    manifest = run_experiment(parse_config(DESK_CLASSIFICATION), out_dir=out,
                              curves="reference")
    elapsed = time.perf_counter() - t0
    return {"table": _report_table(out), "manifest": manifest,
            "elapsed": elapsed}


def test_criterion_1_gradient_exactness(capsys):
    run_gradcheck(seed=99, instances=1)  # warm the JIT outside the clock
    t0 = time.perf_counter()
    report = run_gradcheck(seed=0, instances=100)
    elapsed = time.perf_counter() - t0
    ok = report.passed and elapsed < 10.0
    _announce(capsys, 1, ok,
              f"gradient exactness: max rel err {report.max_rel_error:.2e} "
              f"over {len(report.cases)} instances (tol 1e-4)",
              elapsed, 10)
    assert report.max_rel_error < 1e-4
    assert len(report.cases) == 500
    assert elapsed < 10.0


def test_criterion_2_sampler_analytic_targets(capsys):
    t0 = time.perf_counter()
    m = 5000
    failures = []

    # Fixed quarter-period trajectories (L * eps = pi/2 * sd) rotate
    # phase space by 90 degrees, so each momentum refresh produces a
    # near-independent draw and plain 3-SE bounds apply.  Adaptive
    # warmup is deliberately off: on a 1D Gaussian it can lock onto the
    # half-period orbit (accept ~ 1, rho_1 ~ -1, frozen variance).
    quarter = (math.pi / 2) / 3

    hmc_cfg = samplers.HmcConfig(num_samples=m, warmup_steps=0,
                                 leapfrog_steps=3, step_size=quarter)
    out = samplers.hmc_run(samplers.standard_normal_target(1).potential,
                           np.zeros(1), hmc_cfg, np.random.default_rng(0))
    s = out.samples[:, 0]
    if not abs(s.mean()) < 3 / math.sqrt(m):
        failures.append(f"std-normal mean {s.mean():+.4f}")
    if not abs(s.var() - 1.0) < 3 * math.sqrt(2 / m):
        failures.append(f"std-normal var {s.var():.4f}")
    if out.diagnostics["divergences"] != 0:
        failures.append("std-normal divergences")

    # 20-observation conjugate posterior for a Gaussian mean:
    # prior N(0, 1), likelihood N(theta, 0.25) -> N(post_mean, 1/81).
    rng = np.random.default_rng(1)
    y = rng.normal(1.2, 0.5, size=20)
    sigma2 = 0.25
    lam = 1.0 + y.size / sigma2
    post_mean = y.sum() / sigma2 / lam
    post_var = 1.0 / lam

    def conjugate_potential(theta):
        th = float(theta[0])
        u = 0.5 * th * th + float(np.sum((y - th) ** 2)) / (2 * sigma2)
        return u, np.array([th + (y.size * th - y.sum()) / sigma2])

    conj_cfg = samplers.HmcConfig(
        num_samples=m, warmup_steps=0, leapfrog_steps=3,
        step_size=quarter * math.sqrt(post_var))
    out2 = samplers.hmc_run(conjugate_potential, np.array([post_mean]),
                            conj_cfg, np.random.default_rng(2))
    s2 = out2.samples[:, 0]
    if not abs(s2.mean() - post_mean) < 3 * math.sqrt(post_var / m):
        failures.append(f"conjugate mean {s2.mean():.5f} vs {post_mean:.5f}")
    if not abs(s2.var() - post_var) < 3 * post_var * math.sqrt(2 / m):
        failures.append(f"conjugate var {s2.var():.6f} vs {post_var:.6f}")

    sg_cfg = samplers.SgMcmcConfig(alpha0=0.05, T=60_000, batch_size=1,
                                   M=300)
    sg_vars = {}
    for name, run, seed in (("sgld", samplers.sgld_run, 0),
                            ("sghmc", samplers.sghmc_run, 1)):
        chain = run(samplers.standard_normal_target(1), None, sg_cfg,
                    np.random.default_rng(seed))
        sg_vars[name] = float(chain.samples[:, 0].var())
        if not 0.7 <= sg_vars[name] <= 1.3:
            failures.append(f"{name} var {sg_vars[name]:.3f}")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120.0
    _announce(capsys, 2, ok,
              f"analytic-target moments: HMC 3-SE on N(0,1) and conjugate "
              f"posterior; sgld var {sg_vars['sgld']:.3f}, sghmc var "
              f"{sg_vars['sghmc']:.3f} in [0.7, 1.3]",
              elapsed, 120)
    assert not failures, failures
    assert elapsed < 120.0


def _brute_force_ause(errors, uncertainty, aggregate, steps):
    n = errors.size

    def agg(vals):
        if vals.size == 0:
            return 0.0
        mean = float(np.mean(vals))
        return math.sqrt(mean) if aggregate == "rmse" else mean

    by_unc = np.argsort(uncertainty, kind="stable")
    by_err = np.argsort(errors, kind="stable")
    fractions = np.linspace(0.0, 1.0, steps + 1)
    base = agg(errors)
    area, prev = 0.0, None
    for i, f in enumerate(fractions):
        keep = n - math.ceil(f * n)
        cur = (agg(errors[by_unc][:keep]) - agg(errors[by_err][:keep])) / base
        if prev is not None:
            area += 0.5 * (prev + cur) * (fractions[i] - fractions[i - 1])
        prev = cur
    return area


def test_criterion_3_metric_closed_forms(capsys):
    t0 = time.perf_counter()
    failures = []

    # kl_gaussian vs numeric quadrature of p1 log(p1/p2), 20 pairs.
    rng = np.random.default_rng(1)
    worst_quad = 0.0
    for _ in range(20):
        mu1, mu2 = rng.normal(size=2)
        s1, s2 = rng.uniform(0.2, 2.0, size=2)

        def integrand(x):
            p1 = math.exp(-0.5 * (x - mu1) ** 2 / s1) / math.sqrt(
                2 * math.pi * s1)
            return p1 * (0.5 * math.log(s2 / s1)
                         - 0.5 * (x - mu1) ** 2 / s1
                         + 0.5 * (x - mu2) ** 2 / s2)

        oracle, _ = integrate.quad(integrand, -np.inf, np.inf)
        worst_quad = max(worst_quad,
                         abs(metrics.kl_gaussian((mu1, s1), (mu2, s2))
                             - oracle))
    if worst_quad >= 1e-6:
        failures.append(f"quadrature gap {worst_quad:.2e}")

    # AUSE vs the brute-force re-sorting oracle, every n <= 8.  The only
    # admissible daylight is trapezoid summation order (1 ulp).
    worst_ause = 0.0
    rng = np.random.default_rng(4)
    for n in range(2, 9):
        for _ in range(10):
            errors = rng.uniform(0.0, 5.0, size=n)
            uncertainty = rng.uniform(0.0, 1.0, size=n)
            for aggregate in ("rmse", "brier-mean"):
                value, _ = metrics.ause(errors, uncertainty,
                                        aggregate=aggregate, steps=n)
                oracle = _brute_force_ause(errors, uncertainty, aggregate, n)
                worst_ause = max(worst_ause, abs(value - oracle))
    if worst_ause > 5e-16:
        failures.append(f"ause oracle gap {worst_ause:.2e}")

    # AUCE on a calibrated fixture and on the degenerate zero-sigma one.
    rng = np.random.default_rng(10)
    n = 100_000
    mu = rng.normal(size=n)
    sigma2 = rng.uniform(0.1, 2.0, size=n)
    targets = rng.normal(mu, np.sqrt(sigma2))
    auce_cal, _ = metrics.auce((mu, sigma2), targets)
    if not auce_cal < 0.01:
        failures.append(f"calibrated auce {auce_cal:.4f}")
    auce_zero, _ = metrics.auce((np.zeros(50), np.zeros(50)), np.ones(50))
    if not abs(auce_zero - 0.5) <= 0.01:
        failures.append(f"zero-sigma auce {auce_zero:.4f}")

    # ECE on the trivial fixtures.
    probs = np.tile([1.0, 0.0], (10, 1))
    ece_right, _ = metrics.ece(probs, np.zeros(10, dtype=int))
    ece_wrong, _ = metrics.ece(probs, np.ones(10, dtype=int))
    if ece_right != 0.0:
        failures.append(f"all-correct ece {ece_right}")
    if abs(ece_wrong - 1.0) > 1e-12:
        failures.append(f"all-wrong ece {ece_wrong}")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60.0
    _announce(capsys, 3, ok,
              f"metric closed forms: quadrature gap {worst_quad:.1e}, "
              f"ause oracle gap {worst_ause:.1e}, calibrated auce "
              f"{auce_cal:.4f}, zero-sigma auce {auce_zero:.3f}, "
              f"ece {ece_right:g}/{ece_wrong:g}",
              elapsed, 60)
    assert not failures, failures
    assert elapsed < 60.0


def test_criterion_4_mixture_collapse(capsys):
    t0 = time.perf_counter()
    failures = []

    for m in (1, 3, 7):
        comp = GaussianPrediction(0.7, math.log(1.9))
        merged = predictive.collapse_gaussian_mixture([comp] * m)
        if not (abs(merged.mu_hat - 0.7) < 1e-12
                and abs(merged.sigma2_hat - 1.9) < 1e-12):
            failures.append(f"identity broken at M={m}")

    rng = np.random.default_rng(20)
    draws = 1_000_000
    worst_z = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 11))
        mus = rng.normal(size=m)
        s2s = rng.uniform(0.1, 2.0, size=m)
        merged = predictive.collapse_gaussian_mixture(
            [GaussianPrediction(mu, math.log(s2))
             for mu, s2 in zip(mus, s2s)])
        idx = rng.integers(0, m, size=draws)
        sample = rng.normal(mus[idx], np.sqrt(s2s[idx]))
        se_mean = sample.std() / math.sqrt(draws)
        centered = sample - sample.mean()
        var = float((centered ** 2).mean())
        se_var = math.sqrt((float((centered ** 4).mean()) - var * var)
                           / draws)
        z_mean = abs(sample.mean() - merged.mu_hat) / se_mean
        z_var = abs(var - merged.sigma2_hat) / se_var
        worst_z = max(worst_z, z_mean, z_var)
        if z_mean >= 3.0 or z_var >= 3.0:
            failures.append(f"MC z-scores mean {z_mean:.2f} var {z_var:.2f}")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30.0
    _announce(capsys, 4, ok,
              f"mixture collapse: identity exact, 20 mixtures vs 1e6-draw "
              f"Monte Carlo, worst |z| {worst_z:.2f} < 3",
              elapsed, 30)
    assert not failures, failures
    assert elapsed < 30.0


def test_criterion_5_regression_trend(capsys, regression_run):
    table = regression_run["table"]
    elapsed = regression_run["elapsed"]
    failures = []
    for m in M_SWEEP:
        ens, _ = table[("ensembling", m)]
        drop, _ = table[("mc-dropout", m)]
        if not ens < drop:
            failures.append(f"M={m}: ensembling {ens:.3f} !< dropout "
                            f"{drop:.3f}")
    for method in ("ensembling", "mc-dropout"):
        for a, b in zip(M_SWEEP, M_SWEEP[1:]):
            mean_a, std_a = table[(method, a)]
            mean_b, _ = table[(method, b)]
            if not mean_b <= mean_a + std_a:
                failures.append(f"{method} rises {a}->{b}: {mean_a:.3f}"
                                f"+{std_a:.3f} -> {mean_b:.3f}")
    ok = not failures and elapsed < 1800.0
    _announce(capsys, 5, ok,
              f"regression trend: KL(ens) < KL(dropout) at every M "
              f"(M=64: {table[('ensembling', 64)][0]:.3f} vs "
              f"{table[('mc-dropout', 64)][0]:.3f}), both non-increasing "
              f"within 1 SD",
              elapsed, 1800)
    assert not failures, failures
    assert elapsed < 1800.0


def test_criterion_6_classification_trend(capsys, classification_run):
    table = classification_run["table"]
    elapsed = classification_run["elapsed"]
    failures = []
    for m in M_SWEEP:
        ens, _ = table[("ensembling", m)]
        drop, _ = table[("mc-dropout", m)]
        if not ens < drop:
            failures.append(f"M={m}: ensembling {ens:.4f} !< dropout "
                            f"{drop:.4f}")
    ok = not failures and elapsed < 1800.0
    _announce(capsys, 6, ok,
              f"classification trend: KL(ens) < KL(dropout) at every M "
              f"(M=64: {table[('ensembling', 64)][0]:.4f} vs "
              f"{table[('mc-dropout', 64)][0]:.4f})",
              elapsed, 1800)
    assert not failures, failures
    assert elapsed < 1800.0


def test_criterion_7_sg_mcmc_placement(capsys, regression_run):
    table = regression_run["table"]
    ens, _ = table[("ensembling", 64)]
    sgld, _ = table[("sgld", 64)]
    sghmc, _ = table[("sghmc", 64)]
    # The SG-MCMC chains share criterion 5's run; their training share of
    # the budget comes from the manifest timings.
    sg_time = sum(run["train_timing_s"]
                  for run in regression_run["manifest"]["runs"]
                  if "train_timing_s" in run
                  and run["method"] in ("sgld", "sghmc"))
    ok = ens <= sgld and ens <= sghmc and sg_time < 1200.0
    _announce(capsys, 7, ok,
              f"SG-MCMC placement at M=64: ensembling {ens:.3f} <= "
              f"sgld {sgld:.3f} and <= sghmc {sghmc:.3f}",
              sg_time, 1200)
    assert ens <= sgld
    assert ens <= sghmc
    assert sg_time < 1200.0


def test_criterion_8_determinism(capsys, tmp_path):
    import json
    t0 = time.perf_counter()
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(DETERMINISM_CONFIG))
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    code_a = cli.main(["run", str(config_path), "--out", str(out_a)])
    code_b = cli.main(["run", str(config_path), "--out", str(out_b)])
    report_a = (out_a / "report.csv").read_bytes()
    report_b = (out_b / "report.csv").read_bytes()
    elapsed = time.perf_counter() - t0
    ok = (code_a == code_b == 0 and report_a == report_b
          and elapsed < 120.0)
    _announce(capsys, 8, ok,
              f"determinism: two run invocations, report.csv byte-identical "
              f"({len(report_a)} bytes)",
              elapsed, 120)
    assert code_a == 0 and code_b == 0
    assert report_a == report_b
    assert elapsed < 120.0
