"""Throughput comparison: numba-compiled kernels vs the pure-numpy fallback.

The acceleration flag is read at import time, so each mode runs in its own
subprocess with BDLBENCH_NUMBA set accordingly.  Run from the repo root:

    python benchmarks/bench_kernels.py [--repeat 5]

Workloads mirror the package's hot paths: plain forward passes, summed
loss+gradient evaluations for both model families, and a short SGLD chain.
JIT compilation happens during warmup and is excluded from the timings.
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _workloads():
    import numpy as np

    from bdlbench import models, samplers
    from bdlbench.nn_core import MlpArchitecture
    from bdlbench.nn_kernels import NLL_FORM

    rng = np.random.default_rng(0)
    reg = models.GaussianRegressionFamily(
        MlpArchitecture((1, 10, 10, 1), "relu"),
        MlpArchitecture((1, 10, 10, 1), "relu"))
    cls = models.CategoricalFamily(MlpArchitecture((2, 10, 10, 2), "relu"))
    th_r = reg.init_params(rng)
    th_c = cls.init_params(rng)
    x1 = rng.uniform(-3.0, 3.0, size=(1000, 1))
    y1 = np.sin(x1[:, 0]) + 0.1 * rng.standard_normal(1000)
    x2 = rng.uniform(-6.0, 6.0, size=(1000, 2))
    onehot = models.one_hot(rng.integers(0, 2, 1000), 2)

    def fwd_regression():
        reg.predict_batch(th_r, x1)

    def grad_regression():
        reg.data_sum_grad(th_r, x1, y1, NLL_FORM)

    def grad_classification():
        cls.data_sum_grad(th_c, x2, onehot)

    def sgld_chain():
        cfg = samplers.SgMcmcConfig(alpha0=1e-5, T=200, batch_size=32, M=1)
        samplers.sgld_run(reg, (x1, y1), cfg, np.random.default_rng(7))

    return [("forward regression x1000", fwd_regression, 200),
            ("loss+grad regression n=1000", grad_regression, 100),
            ("loss+grad classification n=1000", grad_classification, 100),
            ("sgld chain T=200", sgld_chain, 5)]


def _run_worker(repeat):
    """Time each workload in the current process; print JSON to stdout."""
    from bdlbench import NUMBA_ENABLED

    results = {"numba": NUMBA_ENABLED, "times": {}}
    for name, fn, iters in _workloads():
        fn()  # warmup (and JIT compile on the numba path)
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            for _ in range(iters):
                fn()
            best = min(best, (time.perf_counter() - t0) / iters)
        results["times"][name] = best
    json.dump(results, sys.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per workload (best is kept)")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        _run_worker(args.repeat)
        return

    rows = {}
    for label, flag in (("numba", "1"), ("numpy", "0")):
        env = dict(os.environ, BDLBENCH_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True, check=True)
        payload = json.loads(out.stdout)
        if label == "numba" and not payload["numba"]:
            print("numba unavailable; both columns run the numpy path")
        rows[label] = payload["times"]

    width = max(len(k) for k in rows["numba"])
    print(f"{'workload':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name in rows["numba"]:
        tn, tp = rows["numba"][name], rows["numpy"][name]
        print(f"{name:<{width}}  {tn * 1e3:>8.3f}ms  {tp * 1e3:>8.3f}ms"
              f"  {tp / tn:>7.1f}x")


if __name__ == "__main__":
    main()
