"""Max-min flow propagation over a dense grade matrix.

``grades[e, k]`` is the membership grade of item column ``k`` at leaf
``e``; ``carry[f, k]`` caps what flow ``f`` passes (0 = not carried).
One call closes the matrix under every flow:

    grades[dst[f], k] = max(grades[dst[f], k], min(grades[src[f], k], carry[f, k]))

The numba kernel is used unless ``I2D_NO_NUMBA`` is set (or numba is not
installed); the numpy path computes the same fixpoint.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None


def _env_disabled() -> bool:
    return os.environ.get("I2D_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


NUMBA_AVAILABLE = njit is not None


def propagate_numpy(grades, src, dst, carry, ncols):
    """Close ``grades[:, :ncols]`` under all flows; returns whether anything rose."""
    if src.size == 0 or ncols == 0:
        return False
    g = grades[:, :ncols]
    w = carry[:, :ncols]
    changed_any = False
    while True:
        changed = False
        for f in range(src.size):
            a, b = src[f], dst[f]
            incoming = np.minimum(g[a], w[f])
            rise = incoming > g[b]
            if rise.any():
                g[b, rise] = incoming[rise]
                changed = True
        if not changed:
            return changed_any
        changed_any = True


if njit is not None:

    @njit(cache=True, nogil=True)
    def propagate_numba(grades, src, dst, carry, ncols):
        if src.size == 0 or ncols == 0:
            return False
        changed_any = False
        while True:
            changed = False
            for f in range(src.size):
                a = src[f]
                b = dst[f]
                for k in range(ncols):
                    w = carry[f, k]
                    if w > 0.0:
                        g = grades[a, k]
                        if w < g:
                            g = w
                        if g > grades[b, k]:
                            grades[b, k] = g
                            changed = True
            if not changed:
                return changed_any
            changed_any = True

else:  # pragma: no cover
    propagate_numba = None


def use_numba() -> bool:
    return NUMBA_AVAILABLE and not _env_disabled()


def propagate(grades, src, dst, carry, ncols, accel: bool | None = None) -> bool:
    """Dispatch to the numba or numpy kernel (``accel=None``: environment decides)."""
    if accel is None:
        accel = use_numba()
    if accel and propagate_numba is not None:
        return bool(propagate_numba(grades, src, dst, carry, ncols))
    return propagate_numpy(grades, src, dst, carry, ncols)
