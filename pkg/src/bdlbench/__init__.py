"""Desk-scale benchmark for scalable epistemic-uncertainty estimation.

Tiny fully-connected networks with hand-written backprop, a Hamiltonian
Monte Carlo reference posterior, and four approximate inference engines
(SGLD, SGHMC, ensembling, MC-dropout) compared by the KL divergence
from their predictive distributions to the reference on a fixed input
grid, plus the standard regression/classification uncertainty metrics.

Numeric kernels compile with numba when available; set BDLBENCH_NUMBA=0
to force the pure-numpy fallback.
"""

from .accel import NUMBA_ENABLED

__version__ = "0.1.0"

__all__ = ["NUMBA_ENABLED", "__version__"]
