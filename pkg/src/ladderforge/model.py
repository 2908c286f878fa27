"""Domain types shared by the whole pipeline.

Units: rate in kbps, distortion as MSE at the source resolution (10-bit
scale by default), time as single-thread user CPU seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

X265_PRESETS = (
    "ultrafast",
    "superfast",
    "veryfast",
    "faster",
    "fast",
    "medium",
    "slow",
    "slower",
    "veryslow",
    "placebo",
)

DEFAULT_BIT_DEPTH = 10


class DataError(ValueError):
    """Input data violates a precondition (bad metrics, missing fields)."""


class DegenerateDataError(ArithmeticError):
    """Numeric procedure cannot proceed on this data (rank deficiency etc)."""


@dataclass(frozen=True)
class EncodeParams:
    preset_idx: int
    width: int
    height: int
    crf: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"resolution must be positive, got {self.width}x{self.height}")
        if self.preset_idx < 0:
            raise DataError(f"preset_idx must be >= 0, got {self.preset_idx}")

    @property
    def pixels(self) -> int:
        return self.width * self.height

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.preset_idx, self.width, self.height, self.crf)


@dataclass(frozen=True)
class OperatingPoint:
    """One encode of one shot."""

    params: EncodeParams
    rate: float
    distortion: float
    time: float

    @property
    def rdt(self) -> tuple[float, float, float]:
        return (self.rate, self.distortion, self.time)


@dataclass(frozen=True)
class RdtFit:
    """Fitted surface ``d = c * r**k1 * t**k2``; R^2 is log-domain."""

    c: float
    k1: float
    k2: float
    r_squared: float

    @property
    def c_prime(self) -> float:
        return self.k1 / self.k2

    def predict(self, rate, time):
        return self.c * rate**self.k1 * time**self.k2


@dataclass(frozen=True)
class MultiplierPair:
    lam: float
    mu: float

    def __post_init__(self):
        for name, v in (("lambda", self.lam), ("mu", self.mu)):
            if not (math.isfinite(v) and v > 0):
                raise DataError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class ShotRecord:
    shot_id: str
    points: tuple[OperatingPoint, ...]
    duration: float = 1.0
    hull_indices: Optional[tuple[int, ...]] = None
    fit: Optional[RdtFit] = None
    multipliers: Optional[tuple[MultiplierPair, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.hull_indices is not None:
            object.__setattr__(self, "hull_indices", tuple(int(i) for i in self.hull_indices))
            n = len(self.points)
            bad = [i for i in self.hull_indices if not 0 <= i < n]
            if bad:
                raise DataError(f"shot {self.shot_id}: hull indices out of range: {bad}")
        if self.multipliers is not None:
            if self.fit is None:
                raise DataError(f"shot {self.shot_id}: multipliers without a fit")
            object.__setattr__(self, "multipliers", tuple(self.multipliers))
            if self.hull_indices is None or len(self.multipliers) != len(self.hull_indices):
                raise DataError(f"shot {self.shot_id}: one multiplier pair per hull point required")

    @property
    def hull(self) -> tuple[int, ...]:
        """Hull indices, or every index when the shot was never filtered."""
        if self.hull_indices is None:
            return tuple(range(len(self.points)))
        return self.hull_indices


@dataclass(frozen=True)
class Representation:
    """One operating point per shot plus its aggregates.

    ``agg_rate``/``agg_distortion`` are duration-weighted means,
    ``agg_time`` the total CPU seconds.  ``sums`` holds the unweighted
    (sum r, sum d, sum t); it is ``None`` for rows read back from a table
    file without the dataset.
    """

    shot_ids: tuple[str, ...]
    selection: tuple[int, ...]
    agg_rate: float
    agg_distortion: float
    agg_time: float
    sums: Optional[tuple[float, float, float]] = field(default=None, compare=False)

    @classmethod
    def from_selection(cls, shots: Sequence[ShotRecord], selection: Sequence[int]) -> "Representation":
        if len(selection) != len(shots):
            raise DataError(f"selection has {len(selection)} entries for {len(shots)} shots")
        total_dur = 0.0
        wr = wd = 0.0
        sr = sd = st = 0.0
        for shot, idx in zip(shots, selection):
            op = shot.points[idx]
            total_dur += shot.duration
            wr += op.rate * shot.duration
            wd += op.distortion * shot.duration
            sr += op.rate
            sd += op.distortion
            st += op.time
        return cls(
            shot_ids=tuple(s.shot_id for s in shots),
            selection=tuple(int(i) for i in selection),
            agg_rate=wr / total_dur,
            agg_distortion=wd / total_dur,
            agg_time=st,
            sums=(sr, sd, st),
        )

    @property
    def shot_count(self) -> int:
        return len(self.selection)


@dataclass(frozen=True)
class RdtTableRow:
    multipliers: MultiplierPair
    representation: Representation


def psnr_from_mse(mse: float, bit_depth: int = DEFAULT_BIT_DEPTH) -> float:
    if bit_depth not in (8, 10, 12):
        raise ValueError(f"unsupported bit depth {bit_depth}")
    if not mse > 0:
        raise ValueError(f"MSE must be positive, got {mse!r}")
    peak = (1 << bit_depth) - 1
    return 10.0 * math.log10(peak * peak / mse)


def mse_from_psnr(psnr: float, bit_depth: int = DEFAULT_BIT_DEPTH) -> float:
    if bit_depth not in (8, 10, 12):
        raise ValueError(f"unsupported bit depth {bit_depth}")
    peak = (1 << bit_depth) - 1
    return peak * peak / 10.0 ** (psnr / 10.0)


@dataclass(frozen=True)
class Violation:
    shot_id: str
    message: str
    hard: bool = True


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(v.hard for v in self.violations)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def messages(self) -> list[str]:
        return [f"{v.shot_id}: {v.message}" for v in self.violations]


def validate_dataset(shots: Sequence[ShotRecord]) -> ValidationReport:
    """Collect every data problem instead of stopping at the first one."""
    report = ValidationReport()
    seen: set[str] = set()
    for shot in shots:
        if shot.shot_id in seen:
            report.violations.append(Violation(shot.shot_id, "duplicate shot id"))
        seen.add(shot.shot_id)
        if not (math.isfinite(shot.duration) and shot.duration > 0):
            report.violations.append(Violation(shot.shot_id, "non-positive duration"))
        if not shot.points:
            report.violations.append(Violation(shot.shot_id, "no operating points"))
        keys: set[tuple] = set()
        for i, op in enumerate(shot.points):
            for name, v in (("rate", op.rate), ("distortion", op.distortion), ("time", op.time)):
                if not (math.isfinite(v) and v > 0):
                    report.violations.append(
                        Violation(shot.shot_id, f"non-positive {name} at point {i}")
                    )
            if op.params.key in keys:
                report.violations.append(
                    Violation(shot.shot_id, f"duplicate params {op.params.key} at point {i}")
                )
            keys.add(op.params.key)
    return report


def restrict_presets(shots: Sequence[ShotRecord], presets) -> list[ShotRecord]:
    """Copies of ``shots`` keeping only points encoded with the given presets.

    Points are re-indexed and any analysis results are dropped.
    """
    wanted = set(presets)
    out = []
    for shot in shots:
        pts = tuple(op for op in shot.points if op.params.preset_idx in wanted)
        out.append(ShotRecord(shot.shot_id, pts, duration=shot.duration))
    return out
