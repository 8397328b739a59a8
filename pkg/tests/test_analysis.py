import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf

from fidbound.analysis import (
    REFERENCE_TRACE_THRESHOLDS,
    ConditionError,
    CurvePoint,
    NoThresholdError,
    OverlapMeasure,
    ThresholdResult,
    compare_overlaps,
    delta_n,
    fidelity,
    fidelity_curve,
    h2,
    keyrate_gap,
    necessary_condition,
    oneway_entropy_bound,
    overlap_axioms,
    pretty_good_fidelity,
    sufficient_condition,
    threshold_search,
    trace_condition,
    write_curve_csv,
)


def test_sufficient_condition_examples():
    assert sufficient_condition(1.0, 0.3).holds
    assert not sufficient_condition(0.0, 0.1).holds
    # equality at the threshold of scenario (a), where eps = q
    f_star = math.sqrt(0.083 / 0.917)
    assert f_star == pytest.approx(0.3009, abs=1e-4)
    res = sufficient_condition(f_star, 0.083)
    assert res.margin == pytest.approx(0.0, abs=1e-15)
    assert res.fidelity_margin == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ConditionError):
        sufficient_condition(0.5, 0.5)


def test_trace_condition_examples():
    assert trace_condition(0.0, 0.25)
    assert not trace_condition(1.0, 0.01)
    assert REFERENCE_TRACE_THRESHOLDS == {"canonical": 0.077, "optimized": 0.091}
    with pytest.raises(ConditionError):
        trace_condition(0.2, 0.6)


def test_delta_n_values():
    assert delta_n(0.2, 1) == pytest.approx(0.2, abs=1e-15)
    for n in (1, 5, 100, 10_000):
        assert delta_n(0.5, n) == pytest.approx(0.5, abs=1e-15)
    # oracle: direct evaluation at 50 digits
    mp.dps = 50
    exact = mpf("0.1") ** 10 / (mpf("0.1") ** 10 + mpf("0.9") ** 10)
    assert delta_n(0.1, 10) == pytest.approx(float(exact), rel=1e-12)
    assert delta_n(0.1, 10) == pytest.approx(2.8680e-10, rel=1e-4)
    # large n stays finite in log space
    assert 0 < delta_n(0.3, 5000) < 1e-300 or delta_n(0.3, 5000) == 0.0


@given(st.floats(1e-6, 0.499), st.integers(1, 200))
@settings(max_examples=100, deadline=None)
def test_delta_n_decreasing(eps, n):
    assert delta_n(eps, n + 1) <= delta_n(eps, n)


@given(st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_h2_symmetric(p):
    assert abs(h2(p) - h2(1 - p)) <= 1e-14


def test_h2_endpoints():
    assert h2(0.0) == 0.0 and h2(1.0) == 0.0 and h2(0.5) == 1.0
    assert h2(0.25) == pytest.approx(0.8112781244591328, abs=1e-15)


def test_oneway_entropy_bound():
    assert oneway_entropy_bound(1.0) == 1.0
    assert oneway_entropy_bound(0.0) == 0.0
    assert oneway_entropy_bound(0.5) == pytest.approx(0.188722, abs=1e-6)


def test_keyrate_gap():
    assert keyrate_gap(0.0, 1.0) == 1.0
    assert keyrate_gap(0.1, h2(delta_n(0.1, 4)), 4) == pytest.approx(0.0, abs=1e-15)
    expected = 0.5 - h2(1.25e-4 / (1.25e-4 + 0.857375))
    assert keyrate_gap(0.05, 0.5, 3) == pytest.approx(expected, abs=1e-14)


def test_necessary_condition_examples():
    eps = 0.1
    ratio = eps / (1 - eps)
    for n in (1, 2, 7, 30):
        res = necessary_condition(OverlapMeasure("fidelity", ratio), eps, n)
        assert res.eve_error_bound == pytest.approx(res.bob_error, rel=1e-12)
    res = necessary_condition(OverlapMeasure("fidelity", 0.0), eps, 1)
    assert res.eve_error_bound == pytest.approx(eps / 2)
    assert res.condition_holds and res.eve_error_bound <= res.bob_error
    res = necessary_condition(OverlapMeasure("pg", 1.0), eps, 3)
    assert res.eve_error_bound == 0.5 and not res.condition_holds
    assert res.eve_entropy_bound == 1.0
    with pytest.raises(ConditionError):
        necessary_condition(OverlapMeasure("fidelity", 0.1), 0.0, 1)


def test_necessary_condition_equivalence_sweep():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        q, eps, n = rng.random(), rng.uniform(1e-3, 0.499), int(rng.integers(1, 60))
        res = necessary_condition(OverlapMeasure("custom_scalar", q), eps, n)
        gap = res.bob_error - res.eve_error_bound
        if abs(gap) > 1e-12:
            assert res.condition_holds == (gap > 0)


def test_overlap_kind_validation():
    assert OverlapMeasure("pg", 0.3).kind == "pretty_good_fidelity"
    with pytest.raises(ConditionError):
        OverlapMeasure("chernoff", 0.3)
    with pytest.raises(ConditionError):
        OverlapMeasure("fidelity", 1.5)


def test_pretty_good_ordering():
    eps = 0.2
    rng = np.random.default_rng(9)
    for _ in range(50):
        fid = rng.random()
        pg = rng.uniform(fid * fid, fid)
        out = compare_overlaps(fid, pg, eps, n=3)
        # passing with pg implies passing with the fidelity ("passing" = not insecure)
        if not out["pretty_good_fidelity"].condition_holds:
            assert not out["fidelity"].condition_holds
    with pytest.raises(ConditionError):
        compare_overlaps(0.5, 0.9, eps)


def test_overlap_axioms_on_diagonal_states():
    rng = np.random.default_rng(4)
    for _ in range(10):
        r, s, r2, s2 = (np.diag(rng.dirichlet(np.ones(3))) for _ in range(4))
        for measure in (fidelity, pretty_good_fidelity):
            assert all(overlap_axioms(measure, r, s, r2, s2).values())
        # commuting states: the two measures coincide
        assert fidelity(r, s) == pytest.approx(pretty_good_fidelity(r, s), abs=1e-12)


def test_pure_states_saturate_pretty_good_lower_bound():
    u = np.array([1.0, 0.0])
    v = np.array([np.cos(0.4), np.sin(0.4)])
    r, s = np.outer(u, u), np.outer(v, v)
    assert pretty_good_fidelity(r, s) == pytest.approx(fidelity(r, s) ** 2, abs=1e-10)


def test_threshold_result_invariants():
    with pytest.raises(ValueError):
        ThresholdResult(0.05, (0.06, 0.07))
    res = ThresholdResult(0.065, (0.06, 0.07))
    assert res.to_json()["bracket"] == [0.06, 0.07]


def test_curve_records_and_csv(tmp_path):
    points = fidelity_curve("c", [0.0, 0.1, 0.5], order=4, level=2)
    assert [p.q for p in points] == [0.0, 0.1, 0.5]
    assert points[0].condition and not points[1].condition
    uniform = points[-1]
    assert uniform.eps == pytest.approx(0.5) and not uniform.condition
    assert all(p.solve_status in ("optimal", "near_optimal") for p in points)
    path = tmp_path / "curve.csv"
    write_curve_csv(points, path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == CurvePoint.CSV_FIELDS
    assert len(rows) == 4


def test_curve_rejects_bad_noise():
    with pytest.raises(ConditionError):
        fidelity_curve("c", [0.6], order=4, level=2)


def test_threshold_search_small_instance():
    res = threshold_search("c", order=4, level=2, resolution=0.005, bracket=(0.05, 0.08))
    lo, hi = res.bracket
    assert hi - lo <= 0.005
    assert lo < res.q_star <= hi
    recs = {p.q: p for p in res.points}
    assert recs[lo].condition and not recs[hi].condition


def test_threshold_search_reports_missing_sign_change():
    with pytest.raises(NoThresholdError):
        threshold_search("c", order=4, level=2, resolution=0.01, q_range=(0.2, 0.25))
    with pytest.raises(ConditionError):
        threshold_search("c", order=4, level=2, resolution=1e-5)


def test_level_one_bound_is_valid_but_weak():
    # level 1 does not force block probabilities to be nonnegative
    point = fidelity_curve("c", [0.0], order=4, level=1)[0]
    assert point.solve_status in ("optimal", "near_optimal")
    assert 0.0 <= point.fid_lb < 0.1


def test_necessary_condition_large_blocks():
    # both errors are far below double epsilon; the comparison must survive
    res = necessary_condition(OverlapMeasure("fidelity", 0.2), 0.08, 25)
    assert res.eve_error_bound == pytest.approx(0.5 * (0.2 ** 25 + res.bob_error), rel=1e-12)
    assert res.eve_error_bound > res.bob_error and not res.condition_holds
    res = necessary_condition(OverlapMeasure("fidelity", 0.05), 0.08, 25)
    assert 0 < res.eve_error_bound < res.bob_error and res.condition_holds
