"""Backend selection for the numeric kernels.

Set ``AMBISCORE_DISABLE_JIT=1`` to force the pure-numpy kernels even when
numba is importable. Both variants stay importable so they can be compared.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

DISABLE_FLAG = "AMBISCORE_DISABLE_JIT"


def jit_disabled() -> bool:
    return os.environ.get(DISABLE_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not jit_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func
