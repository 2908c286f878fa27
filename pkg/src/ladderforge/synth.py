"""Synthetic per-shot datasets and brute-force oracles used by the tests."""

from __future__ import annotations

import itertools
import math
import zlib
from fractions import Fraction
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .model import (
    DataError,
    EncodeParams,
    OperatingPoint,
    Representation,
    ShotRecord,
)

# x265 preset numbers kept by the experiment grid (veryfast and medium dropped)
TABLE1_PRESETS = (0, 1, 3, 4, 6, 7, 8)
TABLE1_RESOLUTIONS = ((3840, 2160), (1920, 1080), (1280, 720), (960, 540))
TABLE1_CRF = (19, 41, 2)
UHD_PIXELS = 3840 * 2160


class ConfigError(DataError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``presets`` pairs an x265 preset number with its CPU-time factor
    relative to the fastest preset.  ``r0`` is the 2160p/CRF-19 rate and
    ``t0`` the 2160p time of the fastest preset.  ``content_jitter``
    perturbs the model per shot (0 keeps every shot on the same surface).
    """

    c: float = 2.0e5
    k1: float = -0.8
    k2: float = -0.3
    presets: tuple[tuple[int, float], ...] = tuple(
        (p, 2.2**rank) for rank, p in enumerate(TABLE1_PRESETS)
    )
    resolutions: tuple[tuple[int, int], ...] = TABLE1_RESOLUTIONS
    crf_range: tuple[int, int, int] = TABLE1_CRF
    r0: float = 40000.0
    t0: float = 20.0
    noise_sigma: float = 0.0
    seed: int = 0
    content_jitter: float = 0.0
    duration: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "presets", tuple((int(p), float(f)) for p, f in self.presets))
        object.__setattr__(self, "resolutions", tuple((int(w), int(h)) for w, h in self.resolutions))
        object.__setattr__(self, "crf_range", tuple(int(v) for v in self.crf_range))
        self.validate()

    def validate(self) -> None:
        if not self.c > 0:
            raise ConfigError(f"c must be positive, got {self.c}")
        if not (self.k1 < 0 and self.k2 < 0):
            raise ConfigError(f"k1 and k2 must be negative, got {self.k1}, {self.k2}")
        lo, hi, step = self.crf_range
        if step <= 0:
            raise ConfigError(f"CRF step must be positive, got {step}")
        if hi < lo:
            raise ConfigError(f"empty CRF range {self.crf_range}")
        if not self.presets or not self.resolutions:
            raise ConfigError("presets and resolutions must be non-empty")
        factors = [f for _, f in self.presets]
        if any(b <= a for a, b in zip(factors, factors[1:])) or factors[0] <= 0:
            raise ConfigError("preset time factors must be positive and strictly increasing")
        ids = [p for p, _ in self.presets]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate preset numbers")
        if any(w <= 0 or h <= 0 for w, h in self.resolutions):
            raise ConfigError("resolutions must be positive")
        if self.r0 <= 0 or self.t0 <= 0 or self.duration <= 0:
            raise ConfigError("r0, t0 and duration must be positive")
        if self.noise_sigma < 0 or not 0 <= self.content_jitter < 1:
            raise ConfigError("noise_sigma must be >= 0 and content_jitter in [0, 1)")

    @property
    def crfs(self) -> list[int]:
        lo, hi, step = self.crf_range
        return list(range(lo, hi + 1, step))

    @property
    def grid_size(self) -> int:
        return len(self.presets) * len(self.resolutions) * len(self.crfs)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("presets", "resolutions"):
            if key in data:
                data[key] = tuple(tuple(v) for v in data[key])
        if "crf_range" in data:
            data["crf_range"] = tuple(data["crf_range"])
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            f.name: (
                [list(v) for v in getattr(self, f.name)]
                if f.name in ("presets", "resolutions")
                else list(getattr(self, f.name))
                if f.name == "crf_range"
                else getattr(self, f.name)
            )
            for f in fields(self)
        }


@dataclass(frozen=True)
class ShotModel:
    c: float
    k1: float
    k2: float
    r0: float
    t0: float


def _rng(cfg: SynthConfig, shot_id: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64([cfg.seed, zlib.crc32(shot_id.encode())]))


def shot_model(cfg: SynthConfig, shot_id: str) -> ShotModel:
    """Ground-truth surface for one shot (identical to cfg when jitter is 0)."""
    if cfg.content_jitter == 0:
        return ShotModel(cfg.c, cfg.k1, cfg.k2, cfg.r0, cfg.t0)
    j = _rng(cfg, shot_id).uniform(-cfg.content_jitter, cfg.content_jitter, size=5)
    return ShotModel(
        c=cfg.c * math.exp(j[0]),
        k1=cfg.k1 * (1 + j[1]),
        k2=cfg.k2 * (1 + j[2]),
        r0=cfg.r0 * math.exp(2 * j[3]),
        t0=cfg.t0 * math.exp(j[4]),
    )


def gen_shot(cfg: SynthConfig, shot_id: str) -> ShotRecord:
    truth = shot_model(cfg, shot_id)
    rng = _rng(cfg, shot_id)
    if cfg.content_jitter:
        rng.uniform(size=5)  # keep noise independent of the jitter draws
    crfs = cfg.crfs
    points = []
    for preset, factor in cfg.presets:
        for w, h in cfg.resolutions:
            scale = w * h / UHD_PIXELS
            time = truth.t0 * scale * factor
            for q in crfs:
                rate = truth.r0 * scale**0.9 * 2.0 ** (-(q - 19) / 6.0)
                eps = rng.normal(0.0, cfg.noise_sigma) if cfg.noise_sigma else 0.0
                dist = truth.c * rate**truth.k1 * time**truth.k2 * math.exp(eps)
                points.append(OperatingPoint(EncodeParams(preset, w, h, q), rate, dist, time))
    shot = ShotRecord(shot_id, tuple(points), duration=cfg.duration)
    _self_check(shot, cfg)
    return shot


def _self_check(shot: ShotRecord, cfg: SynthConfig) -> None:
    """Rates fall with CRF and grow with resolution; times grow with preset and resolution."""
    by_key = {op.params.key: op for op in shot.points}
    presets = [p for p, _ in cfg.presets]
    res = sorted(cfg.resolutions, key=lambda wh: wh[0] * wh[1])
    crfs = cfg.crfs
    for p in presets:
        for w, h in res:
            rates = [by_key[(p, w, h, q)].rate for q in crfs]
            assert all(b < a for a, b in zip(rates, rates[1:])), "rate must fall with CRF"
        for q in crfs:
            ops = [by_key[(p, w, h, q)] for w, h in res]
            assert all(b.rate > a.rate and b.time > a.time for a, b in zip(ops, ops[1:])), (
                "rate and time must grow with resolution"
            )
    for w, h in res:
        times = [by_key[(p, w, h, crfs[0])].time for p in presets]
        assert all(b > a for a, b in zip(times, times[1:])), "time must grow with preset"


def gen_dataset(cfg: SynthConfig, n_shots: int, prefix: str = "shot") -> list[ShotRecord]:
    return [gen_shot(cfg, f"{prefix}{i:03d}") for i in range(n_shots)]


# -- oracles -----------------------------------------------------------------

def _clip(poly: list[tuple[Fraction, Fraction]], a: Fraction, b: Fraction, c: Fraction):
    """Clip a convex polygon to a*x + b*y <= c, exactly."""
    if not poly:
        return poly
    s = [a * x + b * y - c for x, y in poly]
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        si, sj = s[i], s[j]
        if si <= 0:
            out.append(poly[i])
        if (si < 0 < sj) or (sj < 0 < si):
            f = si / (si - sj)
            (xi, yi), (xj, yj) = poly[i], poly[j]
            out.append((xi + f * (xj - xi), yi + f * (yj - yi)))
    return out


def oracle_hull(
    points: Sequence[OperatingPoint],
    floor: float = 1e-9,
    ceil: float = 1e15,
) -> list[int]:
    """Per-point feasibility of {(lam, mu) >= floor: J(p) <= J(q) for all q}.

    Each other point contributes one half-plane in the (lam, mu) plane; the
    point survives iff the intersection with the box [floor, ceil]^2 is not
    empty.  Arithmetic is exact (floats convert losslessly to fractions).
    Exact duplicates keep only their lowest index.
    """
    rtd = [(p.rate, p.time, p.distortion) for p in points]
    exact = [tuple(Fraction(v) for v in row) for row in rtd]
    lo, hi = Fraction(floor), Fraction(ceil)
    keep = []
    for i, (ri, ti, di) in enumerate(exact):
        if any(rtd[j] == rtd[i] for j in range(i)):
            continue
        poly = [(lo, lo), (hi, lo), (hi, hi), (lo, hi)]
        for j, (rj, tj, dj) in enumerate(exact):
            if j == i:
                continue
            # di + lam*ri + mu*ti <= dj + lam*rj + mu*tj
            poly = _clip(poly, ri - rj, ti - tj, dj - di)
            if not poly:
                break
        if poly:
            keep.append(i)
    return keep


def oracle_best_constrained(
    shots: Sequence[ShotRecord],
    rate_cap: float,
    time_cap: float,
    limit: int = 1_000_000,
) -> Optional[Representation]:
    """Exhaustive minimum of sum d subject to sum r <= rate_cap, sum t <= time_cap.

    Ties: smaller sum t, then smaller sum r, then lexicographic selection.
    """
    hulls = [list(s.hull) for s in shots]
    total = math.prod(len(h) for h in hulls)
    if total > limit:
        raise ValueError(f"{total} combinations exceed the enumeration limit {limit}")
    if total == 0:
        return None
    sum_r = np.zeros(1)
    sum_d = np.zeros(1)
    sum_t = np.zeros(1)
    for shot, hull in zip(shots, hulls):
        r = np.array([shot.points[i].rate for i in hull])
        d = np.array([shot.points[i].distortion for i in hull])
        t = np.array([shot.points[i].time for i in hull])
        sum_r = np.add.outer(sum_r, r).ravel()
        sum_d = np.add.outer(sum_d, d).ravel()
        sum_t = np.add.outer(sum_t, t).ravel()
    feasible = np.flatnonzero((sum_r <= rate_cap) & (sum_t <= time_cap))
    if feasible.size == 0:
        return None
    order = np.lexsort((feasible, sum_r[feasible], sum_t[feasible], sum_d[feasible]))
    flat = int(feasible[order[0]])
    positions = np.unravel_index(flat, [len(h) for h in hulls])
    selection = [hull[int(p)] for hull, p in zip(hulls, positions)]
    return Representation.from_selection(shots, selection)


def enumerate_selections(shots: Sequence[ShotRecord]):
    """Every cross-shot combination of hull points, in lexicographic order."""
    return itertools.product(*(s.hull for s in shots))
