import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderforge.assembler import LadderQuery, Rung, build_multiplier_grid, generate_table, query_ladder
from ladderforge.metrics import (
    ComparisonRow,
    InsufficientPointsError,
    NoOverlapError,
    RdCurve,
    bd_rate,
    budget_sweep,
    comparison_report,
    curve_from_representations,
    format_comparison,
    matched_complexity_ladder,
)
from ladderforge.model import DataError, Representation, psnr_from_mse, restrict_presets
from ladderforge.rdtfit import analyze_shot
from ladderforge.synth import gen_dataset, oracle_best_constrained

ANCHOR = ((256.0, 32.0), (512.0, 35.5), (1024.0, 38.4), (2048.0, 40.9), (4096.0, 43.0))


def _scaled(curve, factor):
    return RdCurve(tuple((r * factor, q) for r, q in curve))


def _rep(rate, mse, time=1.0):
    return Representation(("a",), (0,), rate, mse, time)


def test_curve_sorted_from_representations():
    reps = [_rep(r, m) for r, m in ((1024, 30.0), (256, 200.0), (2048, 15.0), (512, 90.0))]
    curve = curve_from_representations(reps)
    assert [r for r, _ in curve.points] == [256, 512, 1024, 2048]
    assert curve.points[0][1] == psnr_from_mse(200.0)


def test_curve_duplicate_rates_named():
    reps = [_rep(r, 10.0 + k) for k, r in enumerate((256, 256, 512, 1024))]
    with pytest.raises(DataError, match="256"):
        curve_from_representations(reps)


def test_curve_needs_four_points():
    with pytest.raises(InsufficientPointsError):
        curve_from_representations([_rep(1, 1), _rep(2, 1), _rep(3, 1)])
    with pytest.raises(InsufficientPointsError):
        RdCurve(ANCHOR[:3])


def test_curve_validation():
    with pytest.raises(DataError):
        RdCurve(((2, 1), (1, 2), (3, 3), (4, 4)))
    with pytest.raises(DataError):
        RdCurve(((1, 1), (2, math.nan), (3, 3), (4, 4)))


def test_curve_non_monotone_quality_warns(caplog):
    with caplog.at_level(logging.WARNING):
        RdCurve(((1, 1), (2, 3), (3, 2), (4, 4)))
    assert "monotone" in caplog.text


def test_bd_identical_is_zero():
    assert abs(bd_rate(RdCurve(ANCHOR), RdCurve(ANCHOR))) < 1e-9


@pytest.mark.parametrize("factor, expected", [(2.0, 100.0), (1.5, 50.0)])
def test_bd_uniform_rate_scaling(factor, expected):
    assert bd_rate(_scaled(ANCHOR, factor), RdCurve(ANCHOR)) == pytest.approx(expected, abs=1e-6)


def test_bd_negative_means_fewer_bits():
    assert bd_rate(_scaled(ANCHOR, 0.8), RdCurve(ANCHOR)) == pytest.approx(-20.0, abs=1e-6)


def test_bd_no_overlap():
    far = RdCurve(tuple((r, q + 100) for r, q in ANCHOR))
    with pytest.raises(NoOverlapError):
        bd_rate(far, RdCurve(ANCHOR))


def test_bd_repeated_quality_is_degenerate():
    flat = RdCurve(((1, 30), (2, 30), (3, 31), (4, 32)))
    with pytest.raises(ArithmeticError):
        bd_rate(flat, RdCurve(((1, 29), (2, 30), (3, 31), (4, 32))))


def _wiggled(seed, spread):
    rng = np.random.default_rng(seed)
    return RdCurve(tuple((r * math.exp(rng.uniform(-spread, spread)), q) for r, q in ANCHOR))


@pytest.mark.parametrize("seed", range(20))
def test_bd_antisymmetry_near_zero(seed):
    a, b = _wiggled(seed, math.log(1.03)), RdCurve(ANCHOR)
    ab, ba = bd_rate(a, b), bd_rate(b, a)
    # exact in the log domain
    assert math.log1p(ab / 100) == pytest.approx(-math.log1p(ba / 100), abs=1e-12)
    assert abs(ab + ba) <= 0.1


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.integers(0, 1000))
def test_bd_invariant_to_quality_offset(offset, seed):
    a, b = _wiggled(seed, 0.3), RdCurve(ANCHOR)
    shift = lambda c: RdCurve(tuple((r, q + offset) for r, q in c.points))
    assert bd_rate(shift(a), shift(b)) == pytest.approx(bd_rate(a, b), abs=1e-9)


def _ladder(rates, mses, times):
    return [Rung(r, _rep(r, m, t)) for r, m, t in zip(rates, mses, times)]


def test_comparison_identical():
    lad = _ladder([256, 512, 1024, 2048], [200, 90, 30, 15], [1, 2, 3, 4])
    row = comparison_report(lad, lad, "x")
    assert row == ComparisonRow("x", 0.0, 100.0, 4)


def test_comparison_mismatched_targets():
    a = _ladder([256, 512, 1024, 2048], [200, 90, 30, 15], [1, 2, 3, 4])
    b = _ladder([256, 512, 1024, 4096], [200, 90, 30, 15], [1, 2, 3, 4])
    with pytest.raises(DataError):
        comparison_report(a, b)


def test_comparison_skips_absent_rungs():
    a = _ladder([256, 512, 1024, 2048, 4096], [200, 90, 30, 15, 8], [1, 2, 3, 4, 5])
    b = list(a)
    b[4] = Rung(4096, None)
    row = comparison_report(a, b)
    assert row.rungs == 4 and row.complexity_ratio == 100.0


def test_format_comparison_columns():
    text = format_comparison([ComparisonRow("ultrafast", -19.17, 102.1, 7), ComparisonRow("veryslow", -0.15, 96.9, 7)])
    lines = text.splitlines()
    assert len(lines) == 3
    assert "ultrafast" in lines[0] and "-19.17%" in lines[1] and "96.9%" in lines[2]


def test_superset_dominance_exhaustive(small_cfg):
    """The exact constrained optimum over all presets never loses to one preset."""
    full = [analyze_shot(s) for s in gen_dataset(small_cfg, 2, prefix="sup")]
    rng = np.random.default_rng(0)
    for preset in (0, 4, 8):
        sub = [analyze_shot(s) for s in restrict_presets(full, [preset])]
        for _ in range(10):
            r_cap = rng.uniform(200, 30000)
            t_cap = rng.uniform(0.5, 30)
            a = oracle_best_constrained(full, r_cap, t_cap)
            b = oracle_best_constrained(sub, r_cap, t_cap)
            if b is not None:
                assert a is not None and a.sums[1] <= b.sums[1] * (1 + 1e-12)


def test_matched_complexity_ratio_closest_to_100(small_shots):
    table = generate_table(small_shots, build_multiplier_grid(small_shots, 0.05))
    targets = tuple(np.quantile(table.agg_rate, [0.2, 0.35, 0.5, 0.65, 0.8]))
    reference = query_ladder(table, LadderQuery(targets, 0.1, float(np.median(table.agg_time))))
    ladder, scale, ratio = matched_complexity_ladder(table, reference)
    assert 0.8 <= scale <= 1.2
    assert abs(ratio - 100.0) <= 5.0
    row = comparison_report(ladder, reference)
    assert row.complexity_ratio == pytest.approx(ratio)
    assert row.bd_rate <= 1e-9


def test_budget_sweep_monotone(small_shots):
    table = generate_table(small_shots, build_multiplier_grid(small_shots, 0.05))
    targets = tuple(np.quantile(table.agg_rate, [0.2, 0.35, 0.5, 0.65, 0.8]))
    series = budget_sweep(table, targets, [1.0, 0.7, 0.5, 0.3, 0.2])
    assert series[0].bd_rate == pytest.approx(0.0, abs=1e-9)
    bds = [p.bd_rate for p in series]
    ratios = [p.complexity_ratio for p in series]
    assert all(b >= a - 1e-9 for a, b in zip(bds, bds[1:]))
    assert all(b <= a + 1e-9 for a, b in zip(ratios, ratios[1:]))


def test_budget_tightening_never_lowers_rung_distortion(small_shots):
    table = generate_table(small_shots, build_multiplier_grid(small_shots, 0.05))
    targets = tuple(np.quantile(table.agg_rate, [0.2, 0.35, 0.5, 0.65, 0.8]))
    anchor = query_ladder(table, LadderQuery(targets))
    prev = [r.representation.agg_distortion for r in anchor]
    for f in (0.8, 0.6, 0.4, 0.2, 0.1):
        budgets = tuple(r.representation.agg_time * f for r in anchor)
        rungs = query_ladder(table, LadderQuery(targets, 0.1, budgets))
        cur = [r.representation.agg_distortion if r.representation else math.inf for r in rungs]
        assert all(c >= p for c, p in zip(cur, prev))
        prev = cur
