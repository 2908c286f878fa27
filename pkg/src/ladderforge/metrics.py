"""RD curves, Bjontegaard delta-rate and ladder comparison reports."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .assembler import LadderQuery, RdtTable, Rung, query_ladder
from .model import DEFAULT_BIT_DEPTH, DataError, DegenerateDataError, Representation, psnr_from_mse

log = logging.getLogger(__name__)

MIN_CURVE_POINTS = 4


class InsufficientPointsError(DataError):
    pass


class NoOverlapError(DataError):
    pass


@dataclass(frozen=True)
class RdCurve:
    """(rate kbps, quality dB) pairs with strictly increasing rate."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(r), float(q)) for r, q in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < MIN_CURVE_POINTS:
            raise InsufficientPointsError(f"RD curve needs {MIN_CURVE_POINTS} points, got {len(pts)}")
        rates = [r for r, _ in pts]
        if any(r <= 0 or not math.isfinite(r) for r in rates):
            raise DataError("rates must be positive and finite")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise DataError("rates must be strictly increasing")
        quals = [q for _, q in pts]
        if not all(math.isfinite(q) for q in quals):
            raise DataError("qualities must be finite")
        if any(b < a for a, b in zip(quals, quals[1:])):
            log.warning("RD curve quality is not monotone in rate")

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def qualities(self) -> np.ndarray:
        return np.array([q for _, q in self.points])


def curve_from_representations(reps: Sequence[Representation], bit_depth: int = DEFAULT_BIT_DEPTH) -> RdCurve:
    if len(reps) < MIN_CURVE_POINTS:
        raise InsufficientPointsError(f"need {MIN_CURVE_POINTS} representations, got {len(reps)}")
    rates = [rep.agg_rate for rep in reps]
    dupes = sorted({r for r in rates if rates.count(r) > 1})
    if dupes:
        raise DataError(f"duplicate representation rates: {dupes}")
    pts = sorted((rep.agg_rate, psnr_from_mse(rep.agg_distortion, bit_depth)) for rep in reps)
    return RdCurve(tuple(pts))


def _log_rate_of_quality(curve: RdCurve) -> PchipInterpolator:
    q = curve.qualities
    lr = np.log(curve.rates)
    order = np.argsort(q, kind="stable")
    q, lr = q[order], lr[order]
    if np.any(np.diff(q) <= 0):
        raise DegenerateDataError("curve has repeated quality values; cannot invert to rate(quality)")
    return PchipInterpolator(q, lr)


def bd_rate(test: RdCurve, anchor: RdCurve) -> float:
    """Average rate difference of ``test`` against ``anchor`` in percent.

    Log-rate is interpolated as a monotone piecewise cubic of quality and
    integrated exactly over the common quality interval.  Negative values
    mean the test curve needs less rate for the same quality.
    """
    lo = max(test.qualities.min(), anchor.qualities.min())
    hi = min(test.qualities.max(), anchor.qualities.max())
    if not hi > lo:
        raise NoOverlapError(f"quality ranges do not overlap ([{lo:.4g}, {hi:.4g}])")
    f_test = _log_rate_of_quality(test)
    f_anchor = _log_rate_of_quality(anchor)
    diff = (f_test.integrate(lo, hi) - f_anchor.integrate(lo, hi)) / (hi - lo)
    return 100.0 * math.expm1(diff)


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    bd_rate: float
    complexity_ratio: float
    rungs: int


def ladder_time(rungs: Sequence[Rung]) -> float:
    return sum(r.representation.agg_time for r in rungs if r.representation is not None)


def comparison_report(
    ours: Sequence[Rung],
    reference: Sequence[Rung],
    label: str = "",
    bit_depth: int = DEFAULT_BIT_DEPTH,
) -> ComparisonRow:
    """BD-rate of ``ours`` against ``reference`` plus their total-CPU ratio.

    Only rungs present in both ladders take part.
    """
    if [r.target for r in ours] != [r.target for r in reference]:
        raise DataError("ladders must share the same targets")
    pairs = [(a, b) for a, b in zip(ours, reference)
             if a.representation is not None and b.representation is not None]
    if len(pairs) < MIN_CURVE_POINTS:
        raise InsufficientPointsError(f"only {len(pairs)} rungs present in both ladders")
    ours_reps = [a.representation for a, _ in pairs]
    ref_reps = [b.representation for _, b in pairs]
    bd = bd_rate(curve_from_representations(ours_reps, bit_depth),
                 curve_from_representations(ref_reps, bit_depth))
    t_ours = sum(r.agg_time for r in ours_reps)
    t_ref = sum(r.agg_time for r in ref_reps)
    return ComparisonRow(label, bd, 100.0 * t_ours / t_ref, len(pairs))


def format_comparison(rows: Sequence[ComparisonRow]) -> str:
    """Plain-text table with one column per preset/budget."""
    labels = ["preset"] + [r.label for r in rows]
    bds = ["BDrate"] + [f"{r.bd_rate:.2f}%" for r in rows]
    rcs = ["r_c"] + [f"{r.complexity_ratio:.1f}%" for r in rows]
    widths = [max(len(a), len(b), len(c)) for a, b, c in zip(labels, bds, rcs)]
    return "\n".join(
        " | ".join(cell.rjust(w) for cell, w in zip(line, widths)) for line in (labels, bds, rcs)
    )


def matched_complexity_ladder(
    table: RdtTable,
    reference: Sequence[Rung],
    rate_tolerance: float = 0.10,
    scales: Optional[Sequence[float]] = None,
) -> tuple[list[Rung], float, float]:
    """Query ``table`` with per-rung budgets proportional to the reference times.

    Budgets are the reference rung times times a common scale factor; the
    scale whose ladder CPU ratio (over rungs present in both) is closest to
    100% wins, larger scale on ties.  Returns (ladder, scale, ratio percent).
    """
    targets = tuple(r.target for r in reference)
    if scales is None:
        scales = np.round(np.arange(1.20, 0.795, -0.01), 6)
    best = None
    for s in scales:
        budgets = tuple(
            r.representation.agg_time * s if r.representation is not None else 0.0 for r in reference
        )
        ladder = query_ladder(table, LadderQuery(targets, rate_tolerance, budgets))
        common = [(a, b) for a, b in zip(ladder, reference)
                  if a.representation is not None and b.representation is not None]
        if not common:
            continue
        ratio = 100.0 * sum(a.representation.agg_time for a, _ in common) / sum(
            b.representation.agg_time for _, b in common)
        if best is None or abs(ratio - 100.0) < abs(best[2] - 100.0):
            best = (ladder, float(s), ratio)
    if best is None:
        raise InsufficientPointsError("no budget scale produced a comparable ladder")
    return best


@dataclass(frozen=True)
class SweepPoint:
    budget_fraction: float
    complexity_ratio: float
    bd_rate: float
    rungs: int


def budget_sweep(
    table: RdtTable,
    targets: Sequence[float],
    fractions: Sequence[float],
    rate_tolerance: float = 0.10,
    bit_depth: int = DEFAULT_BIT_DEPTH,
) -> list[SweepPoint]:
    """BD-rate and CPU ratio versus budget, relative to the unconstrained ladder.

    Each rung's budget is a fraction of the unconstrained rung's CPU time.
    Fractions whose ladder has fewer than four comparable rungs are skipped.
    """
    anchor = query_ladder(table, LadderQuery(tuple(targets), rate_tolerance))
    out = []
    for f in fractions:
        budgets = tuple(r.representation.agg_time * f if r.representation else 0.0 for r in anchor)
        ladder = query_ladder(table, LadderQuery(tuple(targets), rate_tolerance, budgets))
        try:
            row = comparison_report(ladder, anchor, bit_depth=bit_depth)
        except (InsufficientPointsError, NoOverlapError, DegenerateDataError) as exc:
            log.info("budget fraction %.4g skipped: %s", f, exc)
            continue
        out.append(SweepPoint(float(f), row.complexity_ratio, row.bd_rate, row.rungs))
    return out
