"""Compute-backend selection for the hot kernels.

Two interchangeable implementations of the row-modulation kernels exist:
a numba ``@njit`` build and a pure-numpy build. The active one is picked
once at import time from the ``CLAY_BACKEND`` environment variable:

  CLAY_BACKEND=auto   use numba when importable, else numpy (default)
  CLAY_BACKEND=numba  require numba, fail fast if it cannot be imported
  CLAY_BACKEND=numpy  force the pure-numpy path

``CLAY_THREADS`` caps worker parallelism (numba thread pool and the
evaluation worker pool); unset means library defaults.
"""

from __future__ import annotations

import os

_VALID = ("auto", "numba", "numpy")


def _requested() -> str:
    value = os.environ.get("CLAY_BACKEND", "auto").strip().lower()
    if value not in _VALID:
        raise ValueError(
            f"CLAY_BACKEND must be one of {_VALID}, got {value!r}"
        )
    return value


def _resolve() -> str:
    choice = _requested()
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND: str = _resolve()
USING_NUMBA: bool = BACKEND == "numba"


def thread_cap() -> int | None:
    """Worker-count cap from CLAY_THREADS, or None when unset."""
    raw = os.environ.get("CLAY_THREADS")
    if raw is None or not raw.strip():
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("CLAY_THREADS must be >= 1")
    return n


if USING_NUMBA:
    cap = thread_cap()
    if cap is not None:
        import numba

        numba.set_num_threads(min(cap, numba.config.NUMBA_NUM_THREADS))
