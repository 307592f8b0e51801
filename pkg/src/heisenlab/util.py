"""Small shared helpers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["ordered_map", "loglog_slope", "richardson"]


def ordered_map(fn, items, workers: int = 1):
    """Map preserving item order; thread-parallel when workers > 1.

    Reduction order is fixed by the input order, so results do not depend
    on the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def loglog_slope(xs, ys):
    """Least-squares slope of log(y) against log(x)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    good = (xs > 0) & (ys > 0)
    if np.sum(good) < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs[good]), np.log(ys[good]), 1)[0])


def richardson(eps_list, values):
    """Extrapolate values(eps) -> eps = 0 assuming an O(sqrt(eps)) leading error.

    Fits values = a + b sqrt(eps) by least squares and returns (a, b).
    """
    e = np.sqrt(np.asarray(eps_list, dtype=float))
    v = np.asarray(values, dtype=complex)
    A = np.column_stack([np.ones_like(e), e])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return complex(coef[0]), complex(coef[1])
