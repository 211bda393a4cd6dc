"""Kernel backend selection.

Hot kernels ship in two builds: a numba ``@njit`` version and a pure-numpy
fallback.  The environment variable ``GWASEL_BACKEND`` picks the path:

* ``numba`` -- require the jitted kernels, raise if numba is missing
* ``numpy`` -- force the pure-numpy fallback
* unset    -- use numba when importable, else fall back silently

``benchmarks/bench_kernels.py`` compares the two paths head to head.
"""

from __future__ import annotations

import os

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        """No-op stand-in so jitted kernels stay importable without numba."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


def numba_enabled() -> bool:
    """Resolve the active backend from ``GWASEL_BACKEND`` at call time."""
    choice = os.environ.get("GWASEL_BACKEND", "").strip().lower()
    if choice == "numpy":
        return False
    if choice == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError(
                "GWASEL_BACKEND=numba was requested but numba is not importable"
            )
        return True
    return NUMBA_AVAILABLE


def backend_name() -> str:
    return "numba" if numba_enabled() else "numpy"
