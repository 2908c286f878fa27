"""Hyperbolic RDT model fitting and per-point Lagrange multipliers."""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from .hull import filter_hull_3d
from .model import (
    DataError,
    DegenerateDataError,
    MultiplierPair,
    RdtFit,
    ShotRecord,
)

log = logging.getLogger(__name__)


class InsufficientDataError(DegenerateDataError):
    pass


class NonMonotoneFitError(DegenerateDataError):
    pass


def fit_rdt(points: Sequence[tuple[float, float, float]]) -> RdtFit:
    """Least squares of ln d on [1, ln r, ln t].

    ``points`` are (rate, distortion, time) triples.  R^2 is reported in the
    log domain; a perfect fit of constant ln d counts as R^2 = 1.
    """
    arr = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(arr) < 3:
        raise InsufficientDataError(f"need at least 3 points to fit, got {len(arr)}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DataError("rate, distortion and time must be positive and finite")
    lr, ld, lt = np.log(arr[:, 0]), np.log(arr[:, 1]), np.log(arr[:, 2])
    design = np.column_stack([np.ones_like(lr), lr, lt])
    if np.linalg.matrix_rank(design) < 3:
        raise DegenerateDataError("rank-deficient design: rates or times do not vary independently")
    coef, *_ = np.linalg.lstsq(design, ld, rcond=None)
    resid = ld - design @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((ld - ld.mean()) ** 2).sum())
    scale = max(1.0, float(np.abs(ld).max())) ** 2 * len(ld)
    if ss_tot <= 1e-24 * scale:
        r2 = 1.0 if ss_res <= 1e-24 * scale else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RdtFit(c=math.exp(coef[0]), k1=float(coef[1]), k2=float(coef[2]), r_squared=r2)


def multipliers(fit: RdtFit, rate: float, time: float) -> MultiplierPair:
    """Negated partial derivatives of the fitted surface at (rate, time)."""
    if not (fit.k1 < 0 and fit.k2 < 0):
        raise NonMonotoneFitError(
            f"fit exponents must be negative for positive multipliers (k1={fit.k1:.4g}, k2={fit.k2:.4g})"
        )
    if rate <= 0 or time <= 0:
        raise DataError("rate and time must be positive")
    lam = -fit.c * fit.k1 * rate ** (fit.k1 - 1) * time**fit.k2
    mu = -fit.c * fit.k2 * rate**fit.k1 * time ** (fit.k2 - 1)
    return MultiplierPair(lam, mu)


def analyze_shot(shot: ShotRecord) -> ShotRecord:
    """Hull filtering, model fit on the survivors, multipliers per survivor.

    A shot with fewer than three survivors comes back with hull indices only
    (and a logged warning).  Other fit failures are re-raised with the shot id.
    """
    hull = tuple(filter_hull_3d(shot.points))
    shot = replace(shot, hull_indices=hull, fit=None, multipliers=None)
    try:
        fit = fit_rdt([shot.points[i].rdt for i in hull])
    except InsufficientDataError as exc:
        log.warning("shot %s: %s; multipliers not computed", shot.shot_id, exc)
        return shot
    except DegenerateDataError as exc:
        raise type(exc)(f"shot {shot.shot_id}: {exc}") from exc
    try:
        pairs = tuple(multipliers(fit, shot.points[i].rate, shot.points[i].time) for i in hull)
    except NonMonotoneFitError as exc:
        raise NonMonotoneFitError(f"shot {shot.shot_id}: {exc}") from exc
    return replace(shot, fit=fit, multipliers=pairs)
