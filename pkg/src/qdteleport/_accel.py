"""Optional numba acceleration for the loop-heavy kernels.

Set ``QDTELEPORT_NO_NUMBA=1`` to force the pure-numpy code paths. Both paths
take the same inputs (random numbers are always drawn by numpy outside the
kernels) so they agree up to floating-point summation order.
"""
from __future__ import annotations

import os

ENV_FLAG = "QDTELEPORT_NO_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _env_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


_enabled = numba is not None and not _env_disabled()


def enabled() -> bool:
    return _enabled


def set_enabled(flag: bool) -> bool:
    """Switch kernel dispatch at runtime; returns the previous setting."""
    global _enabled
    prev = _enabled
    _enabled = bool(flag) and numba is not None
    return prev


def njit(fn):
    """``numba.njit(cache=True, nogil=True)`` or the plain function when numba is absent."""
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
