"""Multiplier-grid sweep: per-shot min-cost assembly, the RDT table, ladder queries."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .model import (
    DataError,
    DegenerateDataError,
    MultiplierPair,
    RdtTableRow,
    Representation,
    ShotRecord,
)
from .workers import ordered_map

log = logging.getLogger(__name__)

# bounds the (lambda x mu x hull) cost block evaluated at once
_BLOCK_ELEMENTS = 1 << 22


class AssemblyError(DataError):
    pass


class EmptyGridError(DataError):
    pass


@dataclass(frozen=True)
class MultiplierGrid:
    lambdas: tuple[float, ...]
    mus: tuple[float, ...]
    dedup_tolerance: float = 1e-3

    def __post_init__(self):
        for name in ("lambdas", "mus"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if any(v <= 0 or not math.isfinite(v) for v in vals):
                raise DataError(f"{name} must be positive and finite")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise DataError(f"{name} must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.lambdas), len(self.mus))


@dataclass(frozen=True)
class LadderQuery:
    """Targets in kbps.  ``time_budget`` caps total CPU seconds, either one
    value for every rung or one value per target."""

    target_rates: tuple[float, ...]
    rate_tolerance: float = 0.10
    time_budget: Union[None, float, tuple[float, ...]] = None
    reference: Optional[Representation] = None

    def __post_init__(self):
        targets = tuple(float(t) for t in self.target_rates)
        object.__setattr__(self, "target_rates", targets)
        if not targets or any(t <= 0 for t in targets):
            raise DataError("ladder targets must be positive")
        if any(b < a for a, b in zip(targets, targets[1:])):
            raise DataError("ladder targets must be sorted ascending")
        if not 0 < self.rate_tolerance < 1:
            raise DataError(f"rate tolerance must lie in (0, 1), got {self.rate_tolerance}")
        if self.time_budget is not None and not np.isscalar(self.time_budget):
            budgets = tuple(float(b) for b in self.time_budget)
            if len(budgets) != len(targets):
                raise DataError("need one time budget per target")
            object.__setattr__(self, "time_budget", budgets)

    def budget_for(self, k: int) -> float:
        if self.time_budget is None:
            return math.inf
        if isinstance(self.time_budget, tuple):
            return self.time_budget[k]
        return float(self.time_budget)


class Rung(NamedTuple):
    target: float
    representation: Optional[Representation]
    multipliers: Optional[MultiplierPair] = None


def merge_close(values, tol: float) -> list[float]:
    """Sort, then drop values within ``tol`` (log distance) of the last kept one."""
    out: list[float] = []
    for v in sorted(float(x) for x in values):
        if out and math.log(v / out[-1]) <= tol:
            continue
        out.append(v)
    return out


def build_multiplier_grid(shots: Sequence[ShotRecord], dedup_tol: float = 1e-3) -> MultiplierGrid:
    if dedup_tol < 0:
        raise DataError("dedup tolerance must be >= 0")
    lams, mus = [], []
    for shot in shots:
        if not shot.multipliers:
            log.warning("shot %s has no multipliers; it does not contribute to the grid", shot.shot_id)
            continue
        lams.extend(p.lam for p in shot.multipliers)
        mus.extend(p.mu for p in shot.multipliers)
    if not lams:
        raise EmptyGridError("no analyzed shots with multipliers")
    return MultiplierGrid(tuple(merge_close(lams, dedup_tol)), tuple(merge_close(mus, dedup_tol)), dedup_tol)


def _select_one(shot: ShotRecord, lam: float, mu: float) -> int:
    hull = shot.hull
    if not hull:
        raise AssemblyError(f"shot {shot.shot_id} has an empty hull")
    best_key = None
    best = -1
    for i in hull:
        op = shot.points[i]
        j = op.distortion + lam * op.rate + mu * op.time
        key = (j, op.time, op.rate, i)
        if best_key is None or key < best_key:
            best_key, best = key, i
    return best


def assemble(shots: Sequence[ShotRecord], pair: MultiplierPair) -> Representation:
    """Pick the min-cost hull point of every shot for one (lambda, mu).

    Ties on cost go to the smaller time, then smaller rate, then lower index.
    """
    selection = [_select_one(s, pair.lam, pair.mu) for s in shots]
    return Representation.from_selection(shots, selection)


class RdtTable:
    """Rows in lexicographic (lambda, mu) order, stored column-wise.

    ``shots`` is kept when the table was generated in-process; tables read
    from disk carry only what the file holds.
    """

    def __init__(self, shot_ids, lambdas, mus, selections, agg_rate, agg_distortion, agg_time,
                 shots: Optional[Sequence[ShotRecord]] = None, grid: Optional[MultiplierGrid] = None):
        self.shot_ids = tuple(shot_ids)
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.mus = np.asarray(mus, dtype=float)
        self.selections = np.asarray(selections, dtype=np.int64).reshape(len(self.lambdas), len(self.shot_ids))
        self.agg_rate = np.asarray(agg_rate, dtype=float)
        self.agg_distortion = np.asarray(agg_distortion, dtype=float)
        self.agg_time = np.asarray(agg_time, dtype=float)
        self.shots = tuple(shots) if shots is not None else None
        self.grid = grid

    def __len__(self) -> int:
        return len(self.lambdas)

    def representation(self, k: int) -> Representation:
        sel = [int(i) for i in self.selections[k]]
        if self.shots is not None:
            return Representation.from_selection(self.shots, sel)
        return Representation(self.shot_ids, tuple(sel), float(self.agg_rate[k]),
                              float(self.agg_distortion[k]), float(self.agg_time[k]))

    def __getitem__(self, k: int) -> RdtTableRow:
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        pair = MultiplierPair(float(self.lambdas[k]), float(self.mus[k]))
        return RdtTableRow(pair, self.representation(k))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def compact(self) -> "RdtTable":
        """Keep the first row of every distinct selection."""
        _, first = np.unique(self.selections, axis=0, return_index=True)
        keep = np.sort(first)
        return RdtTable(self.shot_ids, self.lambdas[keep], self.mus[keep], self.selections[keep],
                        self.agg_rate[keep], self.agg_distortion[keep], self.agg_time[keep],
                        shots=self.shots)


def _select_grid(shot: ShotRecord, lambdas: np.ndarray, mus: np.ndarray) -> np.ndarray:
    """Selected op index for every (lambda, mu); same arithmetic as assemble."""
    hull = list(shot.hull)
    if not hull:
        raise AssemblyError(f"shot {shot.shot_id} has an empty hull")
    # argmin returns the first minimum, so pre-order by the tie-break key
    hull.sort(key=lambda i: (shot.points[i].time, shot.points[i].rate, i))
    d = np.array([shot.points[i].distortion for i in hull])
    r = np.array([shot.points[i].rate for i in hull])
    t = np.array([shot.points[i].time for i in hull])
    order = np.array(hull)
    n_lam, n_mu, n = len(lambdas), len(mus), len(hull)
    out = np.empty((n_lam, n_mu), dtype=np.int64)
    step = max(1, _BLOCK_ELEMENTS // max(1, n_mu * n))
    for a in range(0, n_lam, step):
        lam = lambdas[a:a + step]
        dr = d[None, :] + lam[:, None] * r[None, :]
        cost = dr[:, None, :] + mus[None, :, None] * t[None, None, :]
        out[a:a + step] = order[np.argmin(cost, axis=2)]
    return out


def generate_table(shots: Sequence[ShotRecord], grid: MultiplierGrid) -> RdtTable:
    """One row per (lambda, mu) of the grid's Cartesian product."""
    shots = tuple(shots)
    if not shots:
        raise AssemblyError("no shots to assemble")
    lambdas = np.array(grid.lambdas)
    mus = np.array(grid.mus)
    per_shot = ordered_map(lambda s: _select_grid(s, lambdas, mus).ravel(), shots)
    selections = np.stack(per_shot, axis=1)
    rate, dist, time = _aggregates(shots, selections)
    lam_col = np.repeat(lambdas, len(mus))
    mu_col = np.tile(mus, len(lambdas))
    return RdtTable([s.shot_id for s in shots], lam_col, mu_col, selections, rate, dist, time,
                    shots=shots, grid=grid)


def _aggregates(shots, selections: np.ndarray):
    # accumulate in shot order, mirroring Representation.from_selection
    n = selections.shape[0]
    total_dur = 0.0
    wr = np.zeros(n)
    wd = np.zeros(n)
    st = np.zeros(n)
    for m, shot in enumerate(shots):
        r = np.array([op.rate for op in shot.points])
        d = np.array([op.distortion for op in shot.points])
        t = np.array([op.time for op in shot.points])
        sel = selections[:, m]
        total_dur += shot.duration
        wr = wr + r[sel] * shot.duration
        wd = wd + d[sel] * shot.duration
        st = st + t[sel]
    return wr / total_dur, wd / total_dur, st


def query_ladder(table: RdtTable, query: LadderQuery) -> list[Rung]:
    """Per target: the min-distortion row inside the rate band and time budget.

    Ties: smaller total time, then smaller rate, then table order.  A rung
    with no qualifying row is returned with ``representation=None``.
    """
    if len(table) == 0:
        raise DataError("empty table")
    rungs = []
    flat = np.arange(len(table))
    for k, target in enumerate(query.target_rates):
        band = np.abs(table.agg_rate - target) <= query.rate_tolerance * target
        ok = band & (table.agg_time <= query.budget_for(k))
        idx = flat[ok]
        if idx.size == 0:
            rungs.append(Rung(target, None))
            continue
        order = np.lexsort((idx, table.agg_rate[idx], table.agg_time[idx], table.agg_distortion[idx]))
        best = int(idx[order[0]])
        row = table[best]
        rungs.append(Rung(target, row.representation, row.multipliers))
    return rungs


def complexity_ratio(candidate: Representation, reference: Representation) -> float:
    """Candidate CPU time as a percentage of the reference's."""
    if not reference.agg_time > 0:
        raise ValueError("reference time must be positive")
    return 100.0 * candidate.agg_time / reference.agg_time


@dataclass(frozen=True)
class RateTimeBalance:
    t_prime: float
    mean_rate: float
    ratio: float


def rate_time_balance(shots: Sequence[ShotRecord], row: RdtTableRow) -> RateTimeBalance:
    """Weighted time T' = mean(c'_i t_i) and the ratio lam*R / (mu*T')."""
    rep = row.representation
    if len(rep.selection) != len(shots):
        raise DataError("row and shots disagree on shot count")
    m = len(shots)
    tw = 0.0
    rsum = 0.0
    for shot, idx in zip(shots, rep.selection):
        if shot.fit is None:
            raise DegenerateDataError(f"shot {shot.shot_id} has no fit")
        op = shot.points[idx]
        tw += shot.fit.c_prime * op.time
        rsum += op.rate
    t_prime = tw / m
    mean_rate = rsum / m
    pair = row.multipliers
    return RateTimeBalance(t_prime, mean_rate, pair.lam * mean_rate / (pair.mu * t_prime))
