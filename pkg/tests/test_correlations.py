import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fidbound.correlations import (
    PHI_PLUS,
    Behavior,
    BehaviorError,
    NoiseModel,
    QuantumStrategy,
    Scenario,
    angle_projector,
    apply_noise,
    behavior_from_strategy,
    chsh,
    correlator,
    is_symmetrized,
    noisy_behavior,
    qber,
    scenario_target,
    symmetrize,
    uniform_behavior,
)

SQRT2 = np.sqrt(2.0)


def random_behavior(rng, ma=2, mb=2):
    table = rng.random((ma, mb, 2, 2))
    return Behavior(Scenario(ma, mb), table / table.sum(axis=(2, 3), keepdims=True))


def test_scenario_shapes():
    assert Scenario(4, 4).shape == (4, 4, 2, 2)
    with pytest.raises(BehaviorError):
        Scenario(0, 2)


def test_behavior_rejects_bad_tables():
    with pytest.raises(BehaviorError):
        Behavior(Scenario(1, 1), [[[[0.5, 0.5], [0.5, 0.0]]]])
    with pytest.raises(BehaviorError):
        Behavior(Scenario(1, 1), [[[[1.2, -0.2], [0.0, 0.0]]]])


def test_behavior_json_round_trip(tmp_path):
    b = scenario_target("b")
    path = tmp_path / "b.json"
    b.save(path)
    again = Behavior.load(path)
    assert again.scenario == b.scenario
    np.testing.assert_array_equal(again.table, b.table)
    data = json.loads(path.read_text())
    assert data["scenario"] == {"ma": 2, "mb": 3}
    assert len(data["table"]) == 24


def test_noise_model_range():
    NoiseModel(0.0)
    NoiseModel(0.5)
    with pytest.raises(BehaviorError):
        NoiseModel(0.6)
    with pytest.raises(BehaviorError):
        NoiseModel(0.1, kind="dephasing")


def test_projectors_are_validated():
    bad = np.array([[1.0, 0.3], [0.3, 0.0]])
    with pytest.raises(BehaviorError):
        QuantumStrategy(PHI_PLUS, [bad], [angle_projector(0.0)])


@pytest.mark.parametrize("name", ["a", "b", "c"])
def test_canonical_scenarios_reach_tsirelson(name):
    assert chsh_for(name) == pytest.approx(2 * SQRT2, abs=1e-9)


def chsh_for(name):
    from fidbound.correlations import CHSH_TERMS

    return chsh(scenario_target(name), CHSH_TERMS[name])


def test_scenario_statistics():
    assert qber(scenario_target("b")) == 0.0
    assert qber(scenario_target("a")) == pytest.approx(0.0, abs=1e-15)
    # (c) measures the key at 22.5 degrees from the optimal basis
    assert qber(scenario_target("c")) == pytest.approx((1 - np.cos(np.pi / 4)) / 2, abs=1e-12)


def test_optimized_c_statistics():
    b = scenario_target("c-opt")
    assert qber(b) == pytest.approx(0.05386, abs=1e-5)
    assert chsh_for("c-opt") == pytest.approx(2.778, abs=1e-3)


def test_depolarized_qber_equals_noise():
    for q in (0.0, 0.01, 0.083, 0.2, 0.5):
        assert qber(noisy_behavior(scenario_target("a"), q)) == pytest.approx(q, abs=1e-12)


def test_noise_halves_to_uniform():
    b = apply_noise(scenario_target("c"), 0.5)
    np.testing.assert_allclose(b.table, uniform_behavior(b.scenario).table, atol=1e-15)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_symmetrize_properties(seed):
    b = random_behavior(np.random.default_rng(seed), 2, 3)
    s = symmetrize(b)
    assert is_symmetrized(s)
    # idempotent, and the correlators are unchanged
    np.testing.assert_allclose(symmetrize(s).table, s.table, atol=1e-15)
    for x in range(2):
        for y in range(3):
            assert correlator(s, x, y) == pytest.approx(correlator(b, x, y), abs=1e-12)
    assert s.pr(0, 0) == pytest.approx(s.pr(1, 1), abs=1e-15)


@given(st.floats(0.0, 0.5), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_noise_scales_correlators(q, seed):
    b = random_behavior(np.random.default_rng(seed))
    n = apply_noise(b, q)
    assert correlator(n, 1, 0) == pytest.approx((1 - 2 * q) * correlator(b, 1, 0), abs=1e-12)


def test_strategy_json_forms(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"state": "phi_plus", "alice": {"angles": [0, 1.5]},
                                "bob": {"angles": [0.7, 2.2]}}))
    strat = QuantumStrategy.load(path)
    ref = QuantumStrategy.from_angles([0, 1.5], [0.7, 2.2])
    np.testing.assert_allclose(behavior_from_strategy(strat).table,
                               behavior_from_strategy(ref).table, atol=1e-14)


def test_chsh_rejects_bad_terms():
    with pytest.raises(BehaviorError):
        chsh(scenario_target("c"), [(0, 5, 1)])
