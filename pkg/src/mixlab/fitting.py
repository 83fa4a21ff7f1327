"""Weighted least-squares power-law fits in log-log coordinates."""
from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateFit


def fit_power_law(xs, ys, weights=None):
    """Fit ``y = C x^slope`` by weighted least squares on ``(ln x, ln y)``.

    Returns ``(slope, slope_stderr, intercept)`` with ``intercept = ln C``.
    The standard error comes from the weighted residual scatter, so exact
    power laws give zero.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size:
        raise DegenerateFit("xs and ys differ in length")
    if x.size < 4:
        raise DegenerateFit(f"need at least 4 points, got {x.size}")
    if np.any(y <= 0) or np.any(x <= 0):
        raise DegenerateFit("power-law fit needs strictly positive data")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    lx, ly = np.log(x), np.log(y)
    sw = w.sum()
    mx, my = (w * lx).sum() / sw, (w * ly).sum() / sw
    sxx = (w * (lx - mx) ** 2).sum()
    if sxx <= 0:
        raise DegenerateFit("all abscissae coincide")
    slope = (w * (lx - mx) * (ly - my)).sum() / sxx
    intercept = my - slope * mx
    resid = ly - intercept - slope * lx
    s2 = (w * resid ** 2).sum() / (x.size - 2)
    return float(slope), float(math.sqrt(s2 / sxx)), float(intercept)


def log_bins(lo: int, hi: int, per_octave: int = 1) -> np.ndarray:
    """Integer bin edges growing geometrically from ``lo`` to ``hi``."""
    n = max(1, int(round(per_octave * math.log2(hi / lo))))
    return np.unique(np.round(np.geomspace(lo, hi, n + 1)).astype(np.int64))
