"""Numba acceleration switch.

Hot numeric kernels in this package are written once, in numpy style, and
compiled with numba's ``@njit`` by default.  Setting the environment variable
``BDLBENCH_NUMBA=0`` (before import) selects the pure-numpy fallback path:
the same functions run uncompiled.  The two paths compute the same thing;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

_flag = os.environ.get("BDLBENCH_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off", "no")

if NUMBA_REQUESTED:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def maybe_njit(func):
    """Apply ``numba.njit`` unless the fallback path is selected."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func
