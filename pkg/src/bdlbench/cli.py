"""Command-line entry point.

Subcommands:

    bdlbench run <config.json> [--out DIR] [--jobs N] [--paper-scale]
                 [--curves {full,reference}]
        Execute an experiment config; writes report.csv, manifest.json,
        dataset and curve CSVs into the output directory.

    bdlbench metrics <fixture.csv> [--ause] [--auce] [--ece L] [--rmse]
        Score a prediction fixture.  Without flags every metric that
        applies to the fixture's task runs.  Curve CSVs are written next
        to the fixture.

    bdlbench gradcheck [--seed S] [--instances N]
        Compare analytic gradients against finite differences.

Exit codes: 0 success, 1 validation error (bad usage, bad config, bad
fixture), 2 runtime failure (divergent sampler or training run, failed
gradient check).
"""

import argparse
import sys
from pathlib import Path

from . import data, experiment, gradcheck, metrics, models, samplers


def _fail(message, code):
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_run(args):
    try:
        config = experiment.load_config(args.config,
                                        paper_scale=args.paper_scale)
        manifest = experiment.run_experiment(config, out_dir=args.out,
                                             jobs=args.jobs,
                                             curves=args.curves)
    except experiment.ConfigError as err:
        return _fail(str(err), 1)
    except (samplers.SamplerError, models.NonFiniteLossError) as err:
        return _fail(str(err), 2)
    out = Path(args.out if args.out is not None else config.output_dir)
    ref = manifest["reference"]
    print(f"task {config.task}  seed {config.seed}")
    print(f"reference: {ref['num_samples']} samples, accept rate "
          f"{ref['accept_rate']:.3f}, {ref['divergences']} divergences, "
          f"step size {ref['final_step_size']:.3g}")
    with open(out / "report.csv", "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            task, method, m, metric, mean, std, repeats = \
                line.rstrip("\n").split(",")
            print(f"  {method:<11} M={m:<5} {metric} "
                  f"{float(mean):.6g} +/- {float(std):.6g} "
                  f"({repeats} repeats)")
    print(f"report: {out / 'report.csv'}")
    print(f"manifest: {out / 'manifest.json'}")
    return 0


def _metrics_regression(fixture, base, selected):
    lines = []
    written = []
    if "ause" in selected:
        squared = (fixture.targets - fixture.mu) ** 2
        value, curve = metrics.ause(squared, fixture.sigma2,
                                    aggregate="rmse")
        path = base.with_name(base.name + "_sparsification.csv")
        metrics.save_sparsification_curve(path, curve)
        written.append(path)
        lines.append(f"ause {value:.10g}")
    if "auce" in selected:
        value, curve = metrics.auce((fixture.mu, fixture.sigma2),
                                    fixture.targets)
        path = base.with_name(base.name + "_calibration.csv")
        metrics.save_calibration_curve(path, curve)
        written.append(path)
        lines.append(f"auce {value:.10g}")
    if "rmse" in selected:
        lines.append(f"rmse {metrics.rmse(fixture.mu, fixture.targets):.10g}")
    return lines, written


def _metrics_classification(fixture, base, selected, num_bins):
    lines = []
    written = []
    if "ause" in selected:
        briers = metrics.brier_scores(fixture.probs, fixture.labels)
        value, curve = metrics.ause(briers, metrics.entropies(fixture.probs),
                                    aggregate="brier-mean")
        path = base.with_name(base.name + "_sparsification.csv")
        metrics.save_sparsification_curve(path, curve)
        written.append(path)
        lines.append(f"ause {value:.10g}")
    if "ece" in selected:
        value, bins = metrics.ece(fixture.probs, fixture.labels,
                                  num_bins=num_bins)
        path = base.with_name(base.name + "_reliability.csv")
        metrics.save_reliability_bins(path, bins)
        written.append(path)
        lines.append(f"ece {value:.10g}")
    return lines, written


def cmd_metrics(args):
    try:
        fixture = data.load_fixture(args.fixture)
    except (OSError, ValueError) as err:
        return _fail(str(err), 1)
    base = Path(args.fixture).with_suffix("")
    flags = {name for name in ("ause", "auce", "ece", "rmse")
             if getattr(args, name)}
    if isinstance(fixture, data.RegressionFixture):
        applicable = {"ause", "auce", "rmse"}
        task = "regression"
    else:
        applicable = {"ause", "ece"}
        task = "classification"
    unsupported = flags - applicable
    if unsupported:
        return _fail(f"{sorted(unsupported)} not defined for a {task} "
                     f"fixture (choose from {sorted(applicable)})", 1)
    selected = flags or applicable
    n = (fixture.targets.size if task == "regression"
         else fixture.labels.size)
    print(f"task: {task} (n={n})")
    try:
        if task == "regression":
            lines, written = _metrics_regression(fixture, base, selected)
        else:
            num_bins = args.ece if args.ece else 10
            lines, written = _metrics_classification(fixture, base, selected,
                                                     num_bins)
    except ValueError as err:
        return _fail(str(err), 1)
    for line in lines:
        print(line)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_gradcheck(args):
    try:
        report = gradcheck.run_gradcheck(seed=args.seed,
                                         instances=args.instances)
    except ValueError as err:
        return _fail(str(err), 1)
    print(report.text())
    return 0 if report.passed else 2


class _Parser(argparse.ArgumentParser):
    """Argparse, but usage errors exit 1 (the validation-error code)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="bdlbench",
        description="Desk-scale benchmark for scalable uncertainty "
                    "estimation on toy problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: config output_dir)")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="worker processes for training runs")
    p_run.add_argument("--paper-scale", action="store_true",
                       help="full budgets: pool 1024, 10 dropout repeats, "
                            "no step-count scaling")
    p_run.add_argument("--curves", choices=experiment.CURVE_MODES,
                       default="full",
                       help="which predictive-curve CSVs to keep")
    p_run.set_defaults(func=cmd_run)

    p_metrics = sub.add_parser("metrics",
                               help="score a prediction fixture CSV")
    p_metrics.add_argument("fixture", help="fixture CSV path")
    p_metrics.add_argument("--ause", action="store_true",
                           help="area under the sparsification-error curve")
    p_metrics.add_argument("--auce", action="store_true",
                           help="area under the calibration-error curve "
                                "(regression only)")
    p_metrics.add_argument("--ece", type=int, default=0, metavar="L",
                           help="expected calibration error with L bins "
                                "(classification only)")
    p_metrics.add_argument("--rmse", action="store_true",
                           help="root-mean-squared error (regression only)")
    p_metrics.set_defaults(func=cmd_metrics)

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference gradient audit")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--instances", type=int, default=10,
                        help="random instances per suite")
    p_grad.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
