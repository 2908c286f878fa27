"""Acceptance criteria on synthetic data.

Each test records one PASS/FAIL line; the lines are printed together at the
end of the pytest run.  Run directly with ``python3 tests/test_acceptance.py``.
"""

import logging
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ladderforge.assembler import (
    LadderQuery,
    assemble,
    build_multiplier_grid,
    generate_table,
    query_ladder,
)
from ladderforge.hull import filter_hull_3d
from ladderforge.metrics import RdCurve, bd_rate, comparison_report, format_comparison, matched_complexity_ladder
from ladderforge.model import MultiplierPair, restrict_presets
from ladderforge.rdtfit import analyze_shot
from ladderforge.synth import SynthConfig, gen_dataset, oracle_best_constrained, oracle_hull, shot_model
from ladderforge.workers import ordered_map

from conftest import brute_select, make_points, random_model_shot

log = logging.getLogger("acceptance")

RESULTS: list[str] = []

# shared synthetic dataset for criteria 3, 4, 7 and 8
DATASET = SynthConfig(noise_sigma=0.05, content_jitter=0.1, seed=0)
N_SHOTS = 10
LADDER = tuple(2.0**k for k in range(8, 15))
TABLE_TOL = 0.03


def record(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def shots():
    return ordered_map(analyze_shot, gen_dataset(DATASET, N_SHOTS))


@pytest.fixture(scope="module")
def table(shots):
    return generate_table(shots, build_multiplier_grid(shots, TABLE_TOL))


def test_c01_fit_recovery():
    cfg = SynthConfig(noise_sigma=0.05, content_jitter=0.1, seed=101)
    start = time.perf_counter()
    analyzed = ordered_map(analyze_shot, gen_dataset(cfg, 50, prefix="fit"))
    elapsed = time.perf_counter() - start
    k_errs, good_r2 = [], 0
    for shot in analyzed:
        truth = shot_model(cfg, shot.shot_id)
        k_errs.append(max(abs(shot.fit.k1 / truth.k1 - 1), abs(shot.fit.k2 / truth.k2 - 1)))
        good_r2 += shot.fit.r_squared >= 0.97
    share = good_r2 / len(analyzed)
    ok = max(k_errs) <= 0.05 and share >= 0.95 and elapsed < 5.0 and len(analyzed[0].points) == 336
    record(1, ok, f"max k error {100 * max(k_errs):.2f}% (<=5%), R2>=0.97 on {100 * share:.0f}% of 50 shots "
                  f"(>=95%), {elapsed:.2f}s (<5s)")


def test_c02_hull_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatches = 0
    for k in range(200):
        n = int(rng.integers(1, 13))
        if k % 2:
            vals = rng.integers(1, 5, size=(n, 3)).astype(float)
        else:
            vals = np.exp(rng.uniform(-3, 3, size=(n, 3)))
        pts = make_points(vals)
        mismatches += filter_hull_3d(pts) != oracle_hull(pts)
    elapsed = time.perf_counter() - start
    record(2, mismatches == 0 and elapsed < 5.0,
           f"{mismatches} mismatches over 200 instances (half degenerate), {elapsed:.2f}s (<5s)")


def test_c03_assembly_optimality(shots):
    rng = np.random.default_rng(3)
    pairs = [p for s in shots for p in s.multipliers]
    lam_lo, lam_hi = min(p.lam for p in pairs), max(p.lam for p in pairs)
    mu_lo, mu_hi = min(p.mu for p in pairs), max(p.mu for p in pairs)
    draws = []
    for k in range(100):
        if k % 2:
            draws.append(pairs[int(rng.integers(len(pairs)))])
        else:
            draws.append(MultiplierPair(math.exp(rng.uniform(math.log(lam_lo), math.log(lam_hi))),
                                        math.exp(rng.uniform(math.log(mu_lo), math.log(mu_hi)))))
    start = time.perf_counter()
    bad = 0
    for pair in draws:
        rep = assemble(shots, pair)
        bad += rep.selection != tuple(brute_select(s, pair.lam, pair.mu) for s in shots)
    elapsed = time.perf_counter() - start
    record(3, bad == 0 and elapsed < 5.0,
           f"{bad}/100 draws differ from the exhaustive per-shot scan over all 336 points, {elapsed:.2f}s (<5s)")


def test_c04_exchange_monotonicity(shots):
    grid = build_multiplier_grid(shots)  # default tolerance, full table
    full = generate_table(shots, grid)
    n_lam, n_mu = grid.shape
    t = full.agg_time.reshape(n_lam, n_mu)
    r = full.agg_rate.reshape(n_lam, n_mu)
    viol_t = int(np.count_nonzero(np.diff(t, axis=1) > 0))
    viol_r = int(np.count_nonzero(np.diff(r, axis=0) > 0))
    record(4, viol_t == 0 and viol_r == 0,
           f"{viol_t} time and {viol_r} rate violations over {len(full)} rows ({n_lam}x{n_mu} grid)")


def _c5_instance(rng, k):
    while True:
        try:
            inst = [random_model_shot(rng, f"i{k}s{m}", 6, noise=0.15) for m in range(3)]
        except ArithmeticError:
            continue
        if all(s.multipliers for s in inst):
            return inst


def test_c05_constrained_query_oracle():
    rng = np.random.default_rng(5)
    tol = 0.10
    checked = violations = mismatches = infeasible = 0
    gaps = []
    for k in range(40):
        inst = _c5_instance(rng, k)
        tab = generate_table(inst, build_multiplier_grid(inst, 0.0))
        targets = tuple(sorted(rng.choice(tab.agg_rate, 4)))
        budgets = tuple(float(b) for b in rng.uniform(0.3, 1.0, 4) * tab.agg_time.max())
        rungs = query_ladder(tab, LadderQuery(targets, tol, budgets))
        for target, budget, rung in zip(targets, budgets, rungs):
            ok = (np.abs(tab.agg_rate - target) <= tol * target) & (tab.agg_time <= budget)
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                mismatches += rung.representation is not None
                continue
            best = min(idx, key=lambda i: (tab.agg_distortion[i], tab.agg_time[i], tab.agg_rate[i], i))
            rep = rung.representation
            checked += 1
            mismatches += rep != tab.representation(int(best))
            violations += not (abs(rep.agg_rate - target) <= tol * target and rep.agg_time <= budget)
            opt = oracle_best_constrained(inst, len(inst) * target * (1 + tol), budget)
            if opt is None:
                infeasible += 1
                continue
            gap = rep.sums[1] - opt.sums[1]
            infeasible += gap < -1e-9 * opt.sums[1]
            gaps.append(gap / opt.sums[1])
    log.info("criterion 5 relative distortion gaps: mean %.4f max %.4f", np.mean(gaps), np.max(gaps))
    record(5, checked > 0 and violations == mismatches == infeasible == 0,
           f"{checked} answered rungs, {violations} cap violations, {mismatches} row-scan mismatches, "
           f"{infeasible} below the exhaustive optimum; gap to optimum mean {100 * np.mean(gaps):.2f}% "
           f"max {100 * np.max(gaps):.2f}%")


def test_c06_bd_rate_analytic():
    anchor = RdCurve(((256.0, 32.0), (512.0, 35.5), (1024.0, 38.4), (2048.0, 40.9), (4096.0, 43.0)))
    scaled = lambda f: RdCurve(tuple((r * f, q) for r, q in anchor.points))
    same, double, half_more = bd_rate(anchor, anchor), bd_rate(scaled(2.0), anchor), bd_rate(scaled(1.5), anchor)
    ok = abs(same) < 1e-9 and abs(double - 100) < 1e-6 and abs(half_more - 50) < 1e-6
    record(6, ok, f"identical {same:.2e}%, x2 {double:.9f}%, x1.5 {half_more:.9f}%")


def test_c07_superset_dominance(shots, table):
    presets = [p for p, _ in DATASET.presets]
    rows = []
    for preset in presets:
        sub = ordered_map(analyze_shot, restrict_presets(shots, [preset]))
        sub_table = generate_table(sub, build_multiplier_grid(sub, TABLE_TOL))
        reference = query_ladder(sub_table, LadderQuery(LADDER))
        ours, scale, _ = matched_complexity_ladder(table, reference)
        rows.append(comparison_report(ours, reference, label=f"preset {preset}"))
    print()
    print(format_comparison(rows))
    matched = all(abs(r.complexity_ratio - 100) <= 5 for r in rows)
    worst = max(rows, key=lambda r: r.bd_rate)
    fastest = rows[0]
    ok = matched and all(r.bd_rate <= 0 for r in rows) and fastest.bd_rate < 0
    detail = ", ".join(f"P{p}: {r.bd_rate:+.2f}%/{r.complexity_ratio:.1f}%" for p, r in zip(presets, rows))
    record(7, ok, f"BD-rate/r_c per single-preset reference [{detail}]; worst {worst.label} "
                  f"{worst.bd_rate:+.2f}% (<=0 required), fastest {fastest.bd_rate:+.2f}% (<0 required)")


def test_c08_complexity_span(table):
    target = 2.0**11
    band = np.abs(table.agg_rate - target) <= 0.10 * target
    t, d = table.agg_time[band], table.agg_distortion[band]
    order = np.lexsort((d, t))
    frontier, best = [], math.inf
    # budget levels at which the min-distortion answer changes
    for ti, di in zip(t[order], d[order]):
        if di < best:
            best = di
            frontier.append(ti)
    levels = np.unique(frontier)
    span = levels.max() / levels.min()
    record(8, span >= 30 and len(levels) >= 20,
           f"at {target:.0f} kbps: {len(levels)} distinct efficient budget levels (>=20), "
           f"span {span:.0f}:1 (>=30:1), ratios {100 * levels.min() / levels.max():.1f}%..100%")


def test_c09_rate_time_identity():
    cfg = SynthConfig(content_jitter=0.1, seed=9)
    worst, count = 0.0, 0
    for shot in ordered_map(analyze_shot, gen_dataset(cfg, 10, prefix="exact")):
        for i, pair in zip(shot.hull_indices, shot.multipliers):
            op = shot.points[i]
            lhs = pair.lam * op.rate
            rhs = pair.mu * shot.fit.c_prime * op.time
            worst = max(worst, abs(lhs - rhs) / abs(lhs))
            count += 1
    record(9, worst <= 1e-9, f"max relative |lam r - mu c' t| = {worst:.2e} over {count} hull points (<=1e-9)")


def _run_pipeline(workdir: Path, threads: str) -> dict[str, bytes]:
    env = dict(os.environ, LADDERFORGE_THREADS=threads)
    (workdir / "cfg.json").write_text('{"noise_sigma": 0.05, "content_jitter": 0.1, "seed": 7, "shots": 4}')
    targets = ",".join(repr(t) for t in LADDER)
    steps = [
        ["synth", "cfg.json", "-o", "dataset.csv"],
        ["analyze", "dataset.csv", "-o", "analysis.csv"],
        ["analyze", "dataset.csv", "--presets", "0", "-o", "analysis_p0.csv"],
        ["table", "analysis.csv", "--dedup-tol", "0.03", "-o", "table.csv"],
        ["table", "analysis_p0.csv", "--dedup-tol", "0.03", "-o", "table_p0.csv"],
        ["ladder", "table_p0.csv", "--targets", targets, "-o", "ladder_p0.csv"],
        ["ladder", "table.csv", "--reference", "ladder_p0.csv", "--match-complexity", "-o", "ladder.csv"],
        ["plotdata", "ladder.csv", "--analysis", "analysis.csv", "-o", "plot.csv"],
    ]
    for step in steps:
        subprocess.run([sys.executable, "-m", "ladderforge.cli", *step], cwd=workdir, env=env,
                       check=True, capture_output=True)
    return {p.name: p.read_bytes() for p in sorted(workdir.glob("*.csv"))}


def test_c10_pipeline_determinism(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    first = _run_pipeline(tmp_path / "a", "1")
    second = _run_pipeline(tmp_path / "b", "0")
    differing = [name for name in first if first[name] != second.get(name)]
    record(10, first.keys() == second.keys() and not differing,
           f"{len(first)} output files from two runs (1 worker vs auto), {len(differing)} differ")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
