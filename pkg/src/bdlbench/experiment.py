"""Declarative experiment runner.

A JSON config (schema version 1) names a task, a set of methods with
hyperparameters, the M values to sweep, and a master seed.  The runner
generates the dataset, computes a reference predictive curve with the
HMC sampler once, then produces posterior sample sets for every
(method, M, repeat) work item, converts each to a predictive curve on
the evaluation grid, and scores it by mean KL against the reference.
Results aggregate into ``report.csv`` (one row per method and M:
``task,method,M,metric,mean,std,repeats``) plus per-run curve CSVs and a
``manifest.json`` holding the config snapshot, every per-run seed, all
artifact paths, and wall-clock timings.  Identical config and seed give
byte-identical reports.

Config example (all method blocks optional, defaults shown for the
regression task):

    {
      "schema_version": 1,
      "task": "toy-regression",
      "seed": 1,
      "output_dir": "results",
      "grid_resolution": 1000,
      "scale_factor": 64,
      "M_values": [8, 16, 32, 64],
      "dataset": {"n": 1000},
      "hmc": {"num_samples": 1000, "warmup_steps": 1000,
              "leapfrog_steps": 50, "step_size": 0.1},
      "methods": {
        "ensembling": {"pool": 64, "epochs": 150, "batch_size": 32,
                        "optimizer": "adam", "lr": 0.001},
        "mc-dropout": {"repeats": 5, "epochs": 300, "batch_size": 32,
                        "optimizer": "adam", "lr": 0.001, "dropout_p": 0.2},
        "sgld":  {"repeats": 6, "alpha0": 0.01, "batch_size": 32},
        "sghmc": {"repeats": 6, "alpha0": 0.001, "eta": 0.1,
                  "batch_size": 32}
      }
    }

SG-MCMC step counts follow the paper-scale epoch budget 256*150 times
ceil(N / batch_size), divided by ``scale_factor``; an explicit ``T``
inside an sgld/sghmc block overrides the computation.  ``--paper-scale``
rebases pool size 1024, 10 MC-dropout repeats, and scale factor 1.
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data, metrics, models, predictive, samplers
from .nn_core import MlpArchitecture

SCHEMA_VERSION = 1
TASKS = ("toy-regression", "toy-classification")
CANONICAL_METHODS = ("ensembling", "mc-dropout", "sgld", "sghmc")
PAPER_EPOCH_FACTOR = 256 * 150
CURVE_MODES = ("full", "reference")

METHOD_DEFAULTS = {
    "toy-regression": {
        "ensembling": {"pool": 64, "epochs": 150, "batch_size": 32,
                       "optimizer": "adam", "lr": 0.001, "repeats": None},
        "mc-dropout": {"repeats": 5, "epochs": 300, "batch_size": 32,
                       "optimizer": "adam", "lr": 0.001, "dropout_p": 0.2},
        "sgld": {"repeats": 6, "alpha0": 0.01, "batch_size": 32, "T": None},
        "sghmc": {"repeats": 6, "alpha0": 0.001, "eta": 0.1,
                  "batch_size": 32, "T": None},
    },
    "toy-classification": {
        "ensembling": {"pool": 64, "epochs": 150, "batch_size": 32,
                       "optimizer": "adam", "lr": 0.001, "repeats": None},
        "mc-dropout": {"repeats": 5, "epochs": 300, "batch_size": 32,
                       "optimizer": "adam", "lr": 0.001, "dropout_p": 0.1},
        "sgld": {"repeats": 6, "alpha0": 0.05, "batch_size": 32, "T": None},
        "sghmc": {"repeats": 6, "alpha0": 0.01, "eta": 0.1,
                  "batch_size": 32, "T": None},
    },
}
HMC_DEFAULTS = {"num_samples": 1000, "warmup_steps": 1000,
                "leapfrog_steps": 50, "step_size": 0.1}
# The reference chain starts from a MAP fit: the potential's minimizer,
# where warmup stepsize adaptation is well conditioned.  A cold start on
# the stiff regression posterior collapses the stepsize before the chain
# reaches the mode.
WARM_START = {"optimizer": "adam", "lr": 0.001, "epochs": 150,
              "batch_size": 32}
DATASET_DEFAULTS = {"toy-regression": {"n": 1000},
                    "toy-classification": {"n_per_class": 520}}
GRID_DEFAULTS = {"toy-regression": 1000, "toy-classification": 200}


class ConfigError(ValueError):
    """Config validation failure; carries the offending field name."""

    def __init__(self, field_name, message):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    output_dir: str
    grid_resolution: int
    scale_factor: int
    M_values: list
    dataset: dict
    hmc: dict
    methods: dict

    def snapshot(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "task": self.task,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "grid_resolution": self.grid_resolution,
            "scale_factor": self.scale_factor,
            "M_values": list(self.M_values),
            "dataset": dict(self.dataset),
            "hmc": dict(self.hmc),
            "methods": {k: dict(v) for k, v in self.methods.items()},
        }


def _require(condition, field_name, message):
    if not condition:
        raise ConfigError(field_name, message)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def parse_config(obj, paper_scale=False):
    """Validate a decoded JSON object into an ExperimentConfig."""
    _require(isinstance(obj, dict), "<root>", "config must be a JSON object")
    known = {"schema_version", "task", "seed", "output_dir",
             "grid_resolution", "scale_factor", "M_values", "dataset",
             "hmc", "methods"}
    for key in obj:
        _require(key in known, key, "unknown config field")
    _require(obj.get("schema_version") == SCHEMA_VERSION, "schema_version",
             f"must be {SCHEMA_VERSION}")
    task = obj.get("task")
    _require(task in TASKS, "task", f"must be one of {TASKS}")
    seed = obj.get("seed", 0)
    _require(_is_int(seed) and seed >= 0, "seed",
             "must be a nonnegative integer")
    output_dir = obj.get("output_dir", "results")
    _require(isinstance(output_dir, str) and output_dir, "output_dir",
             "must be a non-empty string")

    grid_resolution = obj.get("grid_resolution", GRID_DEFAULTS[task])
    _require(_is_int(grid_resolution) and grid_resolution >= 2,
             "grid_resolution", "must be an integer >= 2")
    scale_factor = obj.get("scale_factor", 64)
    if paper_scale:
        scale_factor = 1
    _require(_is_int(scale_factor) and scale_factor >= 1, "scale_factor",
             "must be an integer >= 1")

    m_values = obj.get("M_values")
    _require(isinstance(m_values, list) and len(m_values) >= 1, "M_values",
             "must be a non-empty list")
    for v in m_values:
        _require(_is_int(v) and v >= 1, "M_values",
                 "entries must be integers >= 1")
    _require(all(a < b for a, b in zip(m_values, m_values[1:])), "M_values",
             "must be sorted ascending without duplicates")

    dataset = dict(DATASET_DEFAULTS[task])
    dataset.update(obj.get("dataset", {}))
    if task == "toy-regression":
        _require(set(dataset) == {"n"}, "dataset",
                 "regression dataset takes exactly the field 'n'")
        _require(_is_int(dataset["n"]) and dataset["n"] >= 1, "dataset.n",
                 "must be an integer >= 1")
        n_total = dataset["n"]
    else:
        _require(set(dataset) == {"n_per_class"}, "dataset",
                 "classification dataset takes exactly 'n_per_class'")
        _require(_is_int(dataset["n_per_class"]) and dataset["n_per_class"] >= 1,
                 "dataset.n_per_class", "must be an integer >= 1")
        n_total = 2 * dataset["n_per_class"]

    hmc = dict(HMC_DEFAULTS)
    hmc_in = obj.get("hmc", {})
    _require(isinstance(hmc_in, dict), "hmc", "must be an object")
    for key in hmc_in:
        _require(key in hmc, f"hmc.{key}", "unknown field")
    hmc.update(hmc_in)
    try:
        samplers.HmcConfig(**hmc)
    except (TypeError, ValueError) as err:
        raise ConfigError("hmc", str(err)) from None

    methods_in = obj.get("methods")
    if isinstance(methods_in, list):
        methods_in = {name: {} for name in methods_in}
    _require(isinstance(methods_in, dict) and len(methods_in) >= 1,
             "methods", "must name at least one method")
    methods = {}
    for name, params in methods_in.items():
        _require(name in CANONICAL_METHODS, f"methods.{name}",
                 f"unknown method (choose from {CANONICAL_METHODS})")
        _require(isinstance(params, dict), f"methods.{name}",
                 "hyperparameters must be an object")
        merged = dict(METHOD_DEFAULTS[task][name])
        for key in params:
            _require(key in merged, f"methods.{name}.{key}", "unknown field")
        merged.update(params)
        if paper_scale:
            if name == "ensembling":
                merged["pool"] = 1024
            if name == "mc-dropout":
                merged["repeats"] = 10
        _validate_method(task, name, merged, m_values, n_total, scale_factor)
        methods[name] = merged

    return ExperimentConfig(task, seed, output_dir, grid_resolution,
                            scale_factor, list(m_values), dataset, hmc,
                            methods)


def _validate_method(task, name, p, m_values, n_total, scale_factor):
    prefix = f"methods.{name}"
    if name in ("ensembling", "mc-dropout"):
        _require(_is_int(p["epochs"]) and p["epochs"] >= 1,
                 f"{prefix}.epochs", "must be an integer >= 1")
        _require(_is_int(p["batch_size"]) and p["batch_size"] >= 1,
                 f"{prefix}.batch_size", "must be an integer >= 1")
        _require(p["optimizer"] in ("sgd", "momentum", "adam"),
                 f"{prefix}.optimizer", "must be sgd, momentum, or adam")
        _require(isinstance(p["lr"], (int, float)) and p["lr"] > 0,
                 f"{prefix}.lr", "must be positive")
    if name == "ensembling":
        _require(_is_int(p["pool"]) and p["pool"] >= 1, f"{prefix}.pool",
                 "must be an integer >= 1")
        _require(max(m_values) <= p["pool"], f"{prefix}.pool",
                 f"largest M ({max(m_values)}) exceeds the trained model "
                 f"pool ({p['pool']})")
        if p["repeats"] is not None:
            _require(_is_int(p["repeats"]) and p["repeats"] >= 1,
                     f"{prefix}.repeats", "must be an integer >= 1")
            for m in m_values:
                _require(p["repeats"] <= p["pool"] // m, f"{prefix}.repeats",
                         f"{p['repeats']} disjoint sets of size {m} do not "
                         f"fit in a pool of {p['pool']}")
    if name == "mc-dropout":
        _require(_is_int(p["repeats"]) and p["repeats"] >= 1,
                 f"{prefix}.repeats", "must be an integer >= 1")
        _require(isinstance(p["dropout_p"], (int, float))
                 and 0 <= p["dropout_p"] < 1, f"{prefix}.dropout_p",
                 "must lie in [0, 1)")
    if name in ("sgld", "sghmc"):
        _require(_is_int(p["repeats"]) and p["repeats"] >= 1,
                 f"{prefix}.repeats", "must be an integer >= 1")
        _require(isinstance(p["alpha0"], (int, float)) and p["alpha0"] > 0,
                 f"{prefix}.alpha0", "must be positive")
        _require(_is_int(p["batch_size"]) and p["batch_size"] >= 1,
                 f"{prefix}.batch_size", "must be an integer >= 1")
        if name == "sghmc":
            _require(isinstance(p["eta"], (int, float)) and 0 < p["eta"] <= 1,
                     f"{prefix}.eta", "must lie in (0, 1]")
        if p["T"] is not None:
            _require(_is_int(p["T"]) and p["T"] >= 2, f"{prefix}.T",
                     "must be an integer >= 2")
        total = sg_mcmc_total_steps(n_total, p["batch_size"], scale_factor,
                                    p["T"])
        try:
            samplers.extraction_schedule(total, max(m_values))
        except ValueError as err:
            raise ConfigError(
                f"{prefix}.T" if p["T"] is not None else "scale_factor",
                f"T={total} cannot host {max(m_values)} distinct extraction "
                f"steps ({err})") from None


def load_config(path, paper_scale=False):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<path>", f"no such config file: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError("<json>", f"{path}: {err}") from None
    return parse_config(obj, paper_scale)


def sg_mcmc_total_steps(n, batch_size, scale_factor, override=None):
    """Total SG-MCMC steps: the 256*150-epoch budget divided by the scale."""
    if override is not None:
        return override
    steps_per_epoch = math.ceil(n / batch_size)
    return (PAPER_EPOCH_FACTOR * steps_per_epoch) // scale_factor


def make_family(task, dropout_p=None):
    """The toy network family for a task: 2 hidden layers of size 10."""
    drop = None if dropout_p is None else (1, float(dropout_p))
    if task == "toy-regression":
        arch = MlpArchitecture((1, 10, 10, 1), "relu", drop)
        return models.GaussianRegressionFamily(arch, arch)
    arch = MlpArchitecture((2, 10, 10, 2), "relu", drop)
    return models.CategoricalFamily(arch)


def _seed_int(seed_seq):
    return int(seed_seq.generate_state(1, np.uint64)[0])


def _family_targets(task, dataset):
    if task == "toy-regression":
        return np.asarray(dataset.targets, dtype=np.float64)
    return models.one_hot(dataset.targets, 2)


def ensemble_subset_aggregation(pool_set, m, draws, rng, evaluate):
    """Evaluate ``draws`` disjoint M-sized subsets of a shuffled pool.

    Returns (values, subsets): one metric value per subset, and the
    member-index arrays used.  ``evaluate`` maps a PosteriorSampleSet to
    a scalar.
    """
    pool_size = pool_set.num_samples
    if m > pool_size:
        raise ValueError(f"pool of {pool_size} models is too small for M={m}")
    if draws > pool_size // m:
        raise ValueError(f"{draws} disjoint sets of size {m} do not fit in "
                         f"a pool of {pool_size}")
    perm = rng.permutation(pool_size)
    values = []
    subsets = []
    for d in range(draws):
        idx = np.sort(perm[d * m:(d + 1) * m])
        subset = samplers.PosteriorSampleSet(pool_set.samples[idx],
                                             "ensembling", pool_set.config,
                                             pool_set.seed)
        values.append(evaluate(subset))
        subsets.append(idx.tolist())
    return values, subsets


# ---------------------------------------------------------------------------
# Parallelizable work items.  Each item is a plain dict so it can cross a
# process boundary; results are keyed, so aggregation is order-independent.

def _run_item(item):
    t0 = time.perf_counter()
    kind = item["kind"]
    rng = np.random.default_rng(item["seed"])
    family = item["family"]
    dataset = item["dataset"]
    try:
        if kind == "train-map":
            result = samplers.train_map(family, dataset, item["optimizer"],
                                        item["lr"], item["epochs"],
                                        item["batch_size"], rng)
        elif kind == "chain":
            cfg = samplers.SgMcmcConfig(**item["config"])
            run = (samplers.sgld_run if item["method"] == "sgld"
                   else samplers.sghmc_run)
            result = run(family, dataset, cfg, rng, seed=item["seed"]).samples
        else:
            raise ValueError(f"unknown work item kind {kind!r}")
    except samplers.SamplerError as err:
        raise samplers.SamplerError(
            f"run with seed {item['seed']} failed: {err}") from None
    return item["key"], result, time.perf_counter() - t0


def _execute_items(items, jobs):
    results = {}
    timings = {}
    if jobs <= 1 or len(items) <= 1:
        for item in items:
            key, result, elapsed = _run_item(item)
            results[key] = result
            timings[key] = elapsed
        return results, timings
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for key, result, elapsed in pool.map(_run_item, items):
            results[key] = result
            timings[key] = elapsed
    return results, timings


class _Evaluator:
    """Predictive curves and mean KL against the cached reference."""

    def __init__(self, task, points, ref_curve):
        self.task = task
        self.points = points
        self.ref_curve = ref_curve

    def score(self, source, family=None, num_passes=None, rng=None):
        pred = predictive.posterior_predict(source, self.points,
                                            family=family,
                                            num_passes=num_passes, rng=rng)
        if self.task == "toy-regression":
            mu, s2 = pred
            ref_mu, ref_s2 = self.ref_curve
            kl = float(np.mean(metrics.kl_gaussian_arrays(mu, s2,
                                                          ref_mu, ref_s2)))
        else:
            kl = float(np.mean(metrics.kl_categorical_rows(pred,
                                                           self.ref_curve)))
        return kl, pred

    def save_curve(self, path, pred):
        if self.task == "toy-regression":
            predictive.save_gaussian_curve(path, self.points, pred[0],
                                           pred[1])
        else:
            predictive.save_categorical_curve(path, self.points, pred)


def run_experiment(config, out_dir=None, jobs=1, curves="full"):
    """Execute a validated config; returns the manifest dict."""
    if curves not in CURVE_MODES:
        raise ConfigError("curves", f"must be one of {CURVE_MODES}")
    t_total = time.perf_counter()
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves_dir = out / "curves"
    if curves == "full":
        curves_dir.mkdir(exist_ok=True)

    root = np.random.SeedSequence(config.seed)
    data_ss, hmc_ss, methods_root = root.spawn(3)
    method_ss = dict(zip(CANONICAL_METHODS, methods_root.spawn(4)))

    # Dataset.
    task = config.task
    data_seed = _seed_int(data_ss)
    data_rng = np.random.default_rng(data_seed)
    if task == "toy-regression":
        dataset = data.gen_toy_regression(config.dataset["n"], data_rng,
                                          seed=data_seed)
    else:
        dataset = data.gen_toy_classification(config.dataset["n_per_class"],
                                              data_rng, seed=data_seed)
    dataset_path = out / "dataset.csv"
    data.save_dataset(dataset_path, dataset)

    family = make_family(task)
    targets = _family_targets(task, dataset)
    ds_pair = (dataset.inputs, targets)
    grid = metrics.EvaluationGrid(task, config.grid_resolution)
    points = grid.points

    # Reference predictive curve (computed once, cached as an artifact).
    t0 = time.perf_counter()
    hmc_seed = _seed_int(hmc_ss)
    hmc_rng = np.random.default_rng(hmc_seed)
    hmc_cfg = samplers.HmcConfig(**config.hmc)

    def potential(theta):
        return models.potential_energy(family, dataset.inputs, targets,
                                       theta)

    init = samplers.train_map(family, ds_pair, WARM_START["optimizer"],
                              WARM_START["lr"], WARM_START["epochs"],
                              WARM_START["batch_size"], hmc_rng)
    ref_set = samplers.hmc_run(potential, init, hmc_cfg, hmc_rng,
                               seed=hmc_seed)
    ref_curve = predictive.posterior_predict(ref_set, points, family=family)
    evaluator = _Evaluator(task, points, ref_curve)
    ref_path = out / "reference_curve.csv"
    evaluator.save_curve(ref_path, ref_curve)
    hmc_elapsed = time.perf_counter() - t0

    manifest_runs = []
    report_rows = []

    for method in CANONICAL_METHODS:
        if method not in config.methods:
            continue
        params = config.methods[method]
        values_by_m, runs = _run_method(
            method, params, config, family, dataset, ds_pair, evaluator,
            method_ss[method], curves_dir if curves == "full" else None,
            jobs)
        manifest_runs.extend(runs)
        for m in config.M_values:
            agg = metrics.aggregate_repeats(np.array(values_by_m[m]))
            report_rows.append((task, method, m, "mean_kl", agg.mean,
                                agg.std, agg.repeats))

    report_path = out / "report.csv"
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("task,method,M,metric,mean,std,repeats\n")
        for row in report_rows:
            task_v, method_v, m_v, metric_v, mean_v, std_v, rep_v = row
            fh.write(f"{task_v},{method_v},{m_v},{metric_v},"
                     f"{mean_v:.17g},{std_v:.17g},{rep_v}\n")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": config.snapshot(),
        "curves": curves,
        "dataset": {"path": dataset_path.name, "seed": data_seed,
                    "n": int(dataset.size), "generator": dataset.generator},
        "reference": {
            "path": ref_path.name,
            "seed": hmc_seed,
            "init": "map-warm-start",
            "num_samples": int(ref_set.num_samples),
            "accept_rate": ref_set.diagnostics["accept_rate"],
            "divergences": ref_set.diagnostics["divergences"],
            "final_step_size": ref_set.diagnostics["final_step_size"],
            "timing_s": hmc_elapsed,
        },
        "runs": manifest_runs,
        "report": report_path.name,
        "timing_s": time.perf_counter() - t_total,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _curve_path(curves_dir, method, m, repeat):
    if curves_dir is None:
        return None
    return curves_dir / f"{method}_M{m}_r{repeat}.csv"


def _record(evaluator, runs, values, curves_dir, method, m, repeat, seed,
            kl, pred, extra=None):
    path = _curve_path(curves_dir, method, m, repeat)
    if path is not None:
        evaluator.save_curve(path, pred)
    entry = {"method": method, "M": m, "repeat": repeat, "seed": seed,
             "metric": "mean_kl", "value": kl,
             "curve": None if path is None else f"curves/{path.name}"}
    if extra:
        entry.update(extra)
    runs.append(entry)
    values.append(kl)


def _run_method(method, params, config, family, dataset, ds_pair, evaluator,
                seed_root, curves_dir, jobs):
    if method == "ensembling":
        return _run_ensembling(params, config, family, ds_pair, evaluator,
                               seed_root, curves_dir, jobs)
    if method == "mc-dropout":
        return _run_mc_dropout(params, config, ds_pair, evaluator, seed_root,
                               curves_dir, jobs)
    return _run_sg_mcmc(method, params, config, family, ds_pair, evaluator,
                        seed_root, curves_dir, jobs)


def _run_ensembling(params, config, family, ds_pair, evaluator, seed_root,
                    curves_dir, jobs):
    pool_ss, partition_ss = seed_root.spawn(2)
    member_seeds = [_seed_int(ss) for ss in pool_ss.spawn(params["pool"])]
    items = [{
        "kind": "train-map", "key": i, "seed": s, "family": family,
        "dataset": ds_pair, "optimizer": params["optimizer"],
        "lr": params["lr"], "epochs": params["epochs"],
        "batch_size": params["batch_size"],
    } for i, s in enumerate(member_seeds)]
    results, timings = _execute_items(items, jobs)
    pool_matrix = np.stack([results[i] for i in range(params["pool"])])
    pool_set = samplers.PosteriorSampleSet(pool_matrix, "ensembling",
                                           dict(params), None, {})
    partition_seeds = [_seed_int(ss)
                       for ss in partition_ss.spawn(len(config.M_values))]

    values_by_m = {}
    runs = []
    for mi, m in enumerate(config.M_values):
        draws = params["pool"] // m if params["repeats"] is None \
            else params["repeats"]
        part_rng = np.random.default_rng(partition_seeds[mi])
        values = []
        preds = []

        def evaluate(subset_set):
            kl, pred = evaluator.score(subset_set, family=family)
            preds.append(pred)
            return kl

        subset_values, subsets = ensemble_subset_aggregation(
            pool_set, m, draws, part_rng, evaluate)
        for r, (kl, idx, pred) in enumerate(zip(subset_values, subsets,
                                                preds)):
            _record(evaluator, runs, values, curves_dir, "ensembling", m, r,
                    partition_seeds[mi], kl, pred,
                    extra={"members": list(map(int, idx))})
        values_by_m[m] = values
    pool_entry = {"method": "ensembling", "pool_member_seeds": member_seeds,
                  "subset_strategy": "disjoint-partition",
                  "train_timing_s": float(sum(timings.values()))}
    return values_by_m, runs + [pool_entry]


def _run_mc_dropout(params, config, ds_pair, evaluator, seed_root,
                    curves_dir, jobs):
    task = config.task
    dropout_family = make_family(task, params["dropout_p"])
    train_root, predict_root = seed_root.spawn(2)
    repeats = params["repeats"]
    train_seeds = [_seed_int(ss) for ss in train_root.spawn(repeats)]
    predict_seeds = [_seed_int(ss) for ss in
                     predict_root.spawn(repeats * len(config.M_values))]
    items = [{
        "kind": "train-map", "key": r, "seed": s, "family": dropout_family,
        "dataset": ds_pair, "optimizer": params["optimizer"],
        "lr": params["lr"], "epochs": params["epochs"],
        "batch_size": params["batch_size"],
    } for r, s in enumerate(train_seeds)]
    results, timings = _execute_items(items, jobs)

    values_by_m = {m: [] for m in config.M_values}
    runs = []
    for mi, m in enumerate(config.M_values):
        for r in range(repeats):
            theta = results[r]
            model = dropout_family.to_model(theta)
            p_seed = predict_seeds[r * len(config.M_values) + mi]
            p_rng = np.random.default_rng(p_seed)
            kl, pred = evaluator.score(model, num_passes=m, rng=p_rng)
            _record(evaluator, runs, values_by_m[m], curves_dir,
                    "mc-dropout", m, r, p_seed, kl, pred,
                    extra={"train_seed": train_seeds[r]})
    runs.append({"method": "mc-dropout", "train_seeds": train_seeds,
                 "train_timing_s": float(sum(timings.values()))})
    return values_by_m, runs


def _run_sg_mcmc(method, params, config, family, ds_pair, evaluator,
                 seed_root, curves_dir, jobs):
    n_total = ds_pair[0].shape[0]
    repeats = params["repeats"]
    total = sg_mcmc_total_steps(n_total, params["batch_size"],
                                config.scale_factor, params["T"])
    chain_seeds = [_seed_int(ss) for ss in
                   seed_root.spawn(len(config.M_values) * repeats)]
    items = []
    for mi, m in enumerate(config.M_values):
        cfg = {"alpha0": params["alpha0"], "T": total,
               "batch_size": params["batch_size"], "M": m}
        if method == "sghmc":
            cfg["eta"] = params["eta"]
        for r in range(repeats):
            items.append({
                "kind": "chain", "key": (mi, r),
                "seed": chain_seeds[mi * repeats + r], "family": family,
                "dataset": ds_pair, "method": method, "config": cfg,
            })
    results, timings = _execute_items(items, jobs)

    values_by_m = {m: [] for m in config.M_values}
    runs = []
    for mi, m in enumerate(config.M_values):
        for r in range(repeats):
            samples = results[(mi, r)]
            sample_set = samplers.PosteriorSampleSet(samples, method, {},
                                                     chain_seeds[mi * repeats
                                                                 + r])
            kl, pred = evaluator.score(sample_set, family=family)
            _record(evaluator, runs, values_by_m[m], curves_dir, method, m,
                    r, chain_seeds[mi * repeats + r], kl, pred,
                    extra={"T": total})
    runs.append({"method": method, "train_timing_s":
                 float(sum(timings.values()))})
    return values_by_m, runs
