"""Optional numba acceleration.

Set ``PAIRFACT_DISABLE_NUMBA=1`` (or run without numba installed) to force the
pure-numpy code paths.
"""

import os

_FLAG = os.environ.get("PAIRFACT_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

NUMBA_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    if not NUMBA_ENABLED:
        return func
    return numba.njit(cache=True, nogil=True)(func)
