"""Operating-point filtering in (rate, time, distortion) space.

A point survives hull filtering iff some strictly positive pair (lam, mu)
makes it a minimizer of ``d + lam*r + mu*t``; that is exactly the set of
points the assembler can ever pick.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .model import OperatingPoint

log = logging.getLogger(__name__)

# Relative slack when deciding that two costs tie.
TIE_RTOL = 1e-9


def _rtd(points) -> np.ndarray:
    """(n, 3) array with columns rate, time, distortion."""
    if len(points) and isinstance(points[0], OperatingPoint):
        return np.array([(p.rate, p.time, p.distortion) for p in points], dtype=float)
    arr = np.asarray(points, dtype=float).reshape(-1, 3)
    # raw arrays are given as (rate, distortion, time)
    return arr[:, [0, 2, 1]]


def filter_pareto(points: Sequence[OperatingPoint]) -> list[int]:
    """Indices of non-dominated points; of exact duplicates only the first is kept."""
    x = _rtd(points)
    n = len(x)
    if n == 0:
        return []
    le = np.all(x[:, None, :] <= x[None, :, :], axis=2)  # le[j, i]: x_j <= x_i
    lt = np.any(x[:, None, :] < x[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)
    eq = le & ~lt
    earlier_dup = np.any(np.triu(eq, k=1), axis=0)  # some j < i with x_j == x_i
    return [i for i in range(n) if not (dominated[i] or earlier_dup[i])]


def _mark_ties(y: np.ndarray, w: np.ndarray, keep: np.ndarray) -> None:
    cost = y @ w
    lo = cost.min()
    keep |= cost <= lo + TIE_RTOL * max(1.0, abs(lo))


def _positive_mix(w1: np.ndarray, w2: np.ndarray):
    """A strictly positive a*w1 + (1-a)*w2 with a in (0, 1), or None."""
    lo, hi = 0.0, 1.0
    for a, b in zip(w1, w2):
        # a*alpha + b*(1 - alpha) > 0  <=>  alpha*(a - b) > -b
        slope = a - b
        if slope > 0:
            lo = max(lo, -b / slope)
        elif slope < 0:
            hi = min(hi, -b / slope)
        elif b <= 0:
            return None
    if hi - lo <= 1e-12:
        return None
    alpha = 0.5 * (lo + hi)
    return alpha * w1 + (1 - alpha) * w2


def filter_hull_3d(points: Sequence[OperatingPoint]) -> list[int]:
    """Indices of points selectable by some strictly positive (lam, mu).

    Weak minimizers (points tied with others on a lower face) are kept.
    Output is sorted ascending.
    """
    cand = filter_pareto(points)
    if len(cand) <= 2:
        # two mutually non-dominated points are both selectable
        return cand
    x = _rtd(points)[cand]
    # per-axis scaling leaves the surviving set unchanged
    y = x / x.max(axis=0)
    m = len(y)

    # Hull of P + the positive orthant, truncated at distance 2: any original
    # point that is a hull vertex is the unique minimizer of some w > 0.
    shifted = [y] + [y + 2.0 * np.eye(3)[k] for k in range(3)]
    hull = ConvexHull(np.vstack(shifted))

    keep = np.zeros(m, dtype=bool)
    keep[hull.vertices[hull.vertices < m]] = True

    weights = -hull.equations[:, :3]  # inward normals = minimizing directions
    strict = np.all(weights > 1e-12, axis=1)
    for f in np.flatnonzero(strict):
        _mark_ties(y, weights[f], keep)

    edges: dict[tuple[int, int], list[int]] = {}
    for f, simplex in enumerate(hull.simplices):
        for a, b in ((0, 1), (1, 2), (0, 2)):
            u, v = sorted((int(simplex[a]), int(simplex[b])))
            if v < m:
                edges.setdefault((u, v), []).append(f)
    for facets in edges.values():
        if len(facets) != 2 or (strict[facets[0]] and strict[facets[1]]):
            continue
        w = _positive_mix(weights[facets[0]], weights[facets[1]])
        if w is not None:
            _mark_ties(y, w, keep)

    return sorted(cand[i] for i in np.flatnonzero(keep))
