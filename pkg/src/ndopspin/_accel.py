"""Numba acceleration switch.

Hot inner-loop kernels ship in two flavours: a numba @njit version and a
pure-numpy/python fallback. Selection happens once at import time via the
environment variable NDOPSPIN_NUMBA: set it to "0" to force the fallback
path (useful on platforms without a working numba, and for benchmarking
the two paths against each other, see benchmarks/bench_kernels.py).
"""

import os

USE_NUMBA = os.environ.get("NDOPSPIN_NUMBA", "1") != "0"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        """No-op stand-in so kernel modules import cleanly without numba."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap
