"""Numba/numpy backend selection for the hot kernels.

The env var FUNGRASP_BACKEND picks the implementation of the inner loops:

    FUNGRASP_BACKEND=numba   JIT-compiled kernels (default when numba imports)
    FUNGRASP_BACKEND=numpy   pure-numpy vectorized kernels

Both backends implement the same array-level contracts and agree to
floating-point roundoff; see benchmarks/bench_backends.py for a speed
comparison.
"""

import os

_requested = os.environ.get("FUNGRASP_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(
        f"FUNGRASP_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numba":
    try:
        import numba  # noqa: F401

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False
else:
    HAS_NUMBA = False

#: Name of the backend actually in use ("numba" or "numpy").
ACTIVE = "numba" if HAS_NUMBA else "numpy"


def get_num_threads(cli_value=None):
    """Worker cap for parallel evaluations: CLI flag, else FUNGRASP_THREADS, else 1."""
    if cli_value is not None:
        n = int(cli_value)
    else:
        n = int(os.environ.get("FUNGRASP_THREADS", "1"))
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    return n
