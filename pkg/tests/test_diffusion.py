import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import complete_graph, graph_of, random_connected
from fragnet.diffusion import (
    CascadeResult,
    DistressState,
    ForcingSpec,
    amplification_bound,
    ate_trajectory,
    cascade_stress_test,
    cascade_to_json,
    evolve,
    evolve_forced,
    greedy_deleverage,
    load_scenario,
)
from fragnet.errors import DomainError, InputError
from fragnet.spectral import mixing_time, pseudo_inverse, spectrum_of


def abcd_graph(w=1.0):
    g = complete_graph(4, w)
    g.banks[:] = ["A", "B", "C", "D"]
    return g


def ring_graph(w=np.array([[0, 5, 1, 0], [5, 0, 4, 1], [1, 4, 0, 3], [0, 1, 3, 0]], dtype=float)):
    return graph_of(w.copy(), banks=["A", "B", "C", "D"])


# ---------------------------------------------------------------------------
# homogeneous diffusion


def test_constant_state_is_fixed_point():
    g = complete_graph(4, 1.0)
    out = evolve(g, DistressState(np.full(4, 2.5)), 3.7)
    assert np.allclose(out.values, 2.5, atol=1e-12)
    assert out.time == 3.7


def test_two_node_half_life():
    g = graph_of([[0, 3], [3, 0]])
    out = evolve(g, DistressState(np.array([1.0, 0.0])), math.log(2) / 6)
    assert out.values == pytest.approx([0.75, 0.25], rel=1e-12)


def test_long_run_reaches_mean(rng):
    g = random_connected(rng, 6)
    x0 = rng.uniform(0, 10, 6)
    out = evolve(g, DistressState(x0), 200.0 / spectrum_of(g).lambda2())
    assert np.allclose(out.values, x0.mean(), atol=1e-9)


def test_evolve_matches_rk4_oracle(rng):
    g = random_connected(rng, 7)
    x0 = rng.uniform(0, 5, 7)
    for t in (0.05, 0.4, 1.3):
        got = evolve(g, DistressState(x0), t).values
        want = oracles.rk4_diffusion(g.weights, x0, t, 4000)
        assert np.abs(got - want).max() < 1e-8


def test_semigroup_property(rng):
    g = random_connected(rng, 5)
    x0 = DistressState(rng.uniform(0, 3, 5))
    once = evolve(g, x0, 0.9)
    split = evolve(g, evolve(g, x0, 0.4), 0.5)
    assert np.allclose(once.values, split.values, atol=1e-10)
    assert split.time == pytest.approx(0.9)


def test_disconnected_components_equilibrate_separately():
    g = graph_of(
        [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 2], [0, 0, 2, 0]],
        banks=["A", "B", "C", "D"],
    )
    out = evolve(g, DistressState(np.array([4.0, 0.0, 0.0, 6.0])), 100.0)
    assert out.values == pytest.approx([2.0, 2.0, 3.0, 3.0], abs=1e-9)


def test_evolve_domain_errors():
    g = complete_graph(3)
    with pytest.raises(DomainError):
        evolve(g, DistressState(np.zeros(3)), -0.1)
    with pytest.raises(DomainError):
        evolve(g, DistressState(np.zeros(4)), 0.1)


def test_mixing_time_residual_is_epsilon():
    rng = np.random.default_rng(77)
    g = random_connected(rng, 6)
    spec = spectrum_of(g)
    v2 = spec.eigenvectors[:, 1]
    x0 = 3.0 * np.ones(6) + v2
    for eps in (0.1, 0.01):
        t = mixing_time(spec.lambda2(), eps)
        out = evolve(g, DistressState(x0), t)
        residual = np.linalg.norm(out.values - 3.0)
        assert residual == pytest.approx(eps * np.linalg.norm(v2), rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    t=st.floats(min_value=0.0, max_value=5.0),
)
def test_conservation_and_contraction(seed, t):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 8))
    g = random_connected(rng, n)
    x0 = rng.uniform(-5, 5, n)
    out = evolve(g, DistressState(x0), t).values
    assert out.sum() == pytest.approx(x0.sum(), rel=1e-9, abs=1e-9)
    assert out.var() <= x0.var() + 1e-12


# ---------------------------------------------------------------------------
# forced diffusion


def test_zero_forcing_reduces_to_evolve(rng):
    g = random_connected(rng, 5)
    x0 = DistressState(rng.uniform(0, 2, 5))
    free = evolve(g, x0, 1.1)
    forced = evolve_forced(g, x0, ForcingSpec(np.zeros(5)), 1.1)
    assert np.allclose(free.values, forced.values, atol=1e-12)


def test_balanced_forcing_settles_at_pseudo_inverse(rng):
    g = random_connected(rng, 5)
    f = rng.uniform(0, 2, 5)
    f -= f.mean()
    spec = spectrum_of(g)
    t = 60.0 / spec.lambda2()
    out = evolve_forced(g, DistressState(np.zeros(5)), ForcingSpec(f), t)
    assert np.allclose(out.values, pseudo_inverse(spec) @ f, atol=1e-8)


def test_uniform_forcing_grows_mean_linearly():
    g = complete_graph(4, 1.0)
    out = evolve_forced(g, DistressState(np.zeros(4)), ForcingSpec(np.full(4, 0.3)), 2.5)
    assert np.allclose(out.values, 0.3 * 2.5, atol=1e-12)


def test_forced_matches_rk4_oracle(rng):
    g = random_connected(rng, 6)
    x0 = rng.uniform(0, 3, 6)
    f = rng.uniform(0, 4, 6)
    got = evolve_forced(g, DistressState(x0), ForcingSpec(f), 0.8)
    want = oracles.rk4_diffusion(g.weights, x0, 0.8, 4000, forcing=f)
    assert np.abs(got.values - want).max() < 1e-8


def test_onset_splits_free_and_forced_phases(rng):
    g = random_connected(rng, 5)
    x0 = rng.uniform(0, 2, 5)
    f = rng.uniform(0, 3, 5)
    whole = evolve_forced(g, DistressState(x0), ForcingSpec(f, onset=0.6), 1.4)
    free = evolve(g, DistressState(x0), 0.6)
    tail = oracles.rk4_diffusion(g.weights, free.values, 0.8, 4000, forcing=f)
    assert np.abs(whole.values - tail).max() < 1e-8


def test_onset_before_state_time_forces_whole_span(rng):
    g = random_connected(rng, 4)
    x0 = DistressState(rng.uniform(0, 2, 4), time=1.0)
    f = rng.uniform(0, 2, 4)
    past = evolve_forced(g, x0, ForcingSpec(f, onset=0.5), 1.7)
    always = evolve_forced(g, x0, ForcingSpec(f, onset=0.0), 1.7)
    assert np.allclose(past.values, always.values, atol=1e-12)


def test_forced_domain_errors():
    g = complete_graph(3)
    with pytest.raises(DomainError):
        evolve_forced(g, DistressState(np.zeros(3), time=2.0), ForcingSpec(np.zeros(3)), 1.0)
    with pytest.raises(DomainError):
        evolve_forced(g, DistressState(np.zeros(3)), ForcingSpec(np.zeros(5)), 1.0)
    with pytest.raises(DomainError):
        evolve_forced(g, DistressState(np.zeros(3)), ForcingSpec(np.array([1.0, np.nan, 0.0])), 1.0)


# ---------------------------------------------------------------------------
# treatment-effect path and amplification bound


def test_ate_trajectory_shape():
    path = ate_trajectory(10.0, 2.0, [0.0, math.log(2) / 2, 100.0])
    assert path[0] == 0.0
    assert path[1] == pytest.approx(5.0)
    assert path[2] == pytest.approx(10.0)
    assert path == sorted(path)


def test_ate_trajectory_errors():
    with pytest.raises(DomainError):
        ate_trajectory(1.0, 0.0, [1.0])
    with pytest.raises(DomainError):
        ate_trajectory(1.0, 1.0, [-0.5])


def test_amplification_bound_algebra():
    assert amplification_bound(4.0, 5.0, 0.5) == pytest.approx(1.125)
    assert amplification_bound(4.0, 4.0, 0.9) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        amplification_bound(0.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        amplification_bound(1.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# cascade stress test


def test_cascade_single_failure_timeline():
    g = abcd_graph()
    caps = {"A": 1.0, "B": 10.0, "C": 10.0, "D": 10.0}
    res = cascade_stress_test(g, caps, ForcingSpec(np.array([12.0, 0, 0, 0])), 2.0, 0.2)
    assert res.failed == [(1, "A")]
    assert res.total_failures == 1
    assert res.rounds == 1
    assert res.stabilization_time == pytest.approx(0.2)
    assert res.pre_lambda2 == pytest.approx(4.0)
    assert res.post_lambda2 == pytest.approx(3.0)
    assert res.fragility_change == pytest.approx(-1.0)
    assert res.losses["A"] == pytest.approx(1.8390098307362517, rel=1e-12)
    # 10 windows plus the initial snapshot; survivors tracked after failure
    assert len(res.history) == 11
    assert res.history[1][0] == pytest.approx(0.2)
    assert set(res.history[2][1]) == {"B", "C", "D"}


def test_cascade_single_failure_matches_euler_oracle():
    g = abcd_graph()
    caps = {"A": 1.0, "B": 10.0, "C": 10.0, "D": 10.0}
    res = cascade_stress_test(g, caps, ForcingSpec(np.array([12.0, 0, 0, 0])), 2.0, 0.2)
    failed, losses, survivors = oracles.euler_cascade(
        g.banks, g.weights, caps, [12.0, 0, 0, 0], 0.0, 2.0, 0.2
    )
    assert res.failed == failed
    assert survivors == ["B", "C", "D"]
    assert res.losses["A"] == pytest.approx(losses["A"], abs=1e-3)


def test_cascade_two_rounds_with_delayed_onset():
    g = ring_graph()
    caps = {"A": 1.0, "B": 1.6, "C": 6.0, "D": 6.0}
    shock = ForcingSpec(np.array([12.0, 3.0, 0, 0]), onset=0.3)
    res = cascade_stress_test(g, caps, shock, 2.0, 0.2)
    assert res.failed == [(3, "A"), (6, "B")]
    assert res.rounds == 2
    assert res.stabilization_time == pytest.approx(1.2)
    assert res.pre_lambda2 == pytest.approx(3.862584353340093, rel=1e-9)
    assert res.post_lambda2 == pytest.approx(6.0)
    assert res.losses["A"] == pytest.approx(2.281425131864125, rel=1e-9)
    assert res.losses["B"] == pytest.approx(1.6459640043079964, rel=1e-9)
    # shock starts inside window 2, so window 1 ends with zero distress
    assert all(abs(v) < 1e-12 for v in res.history[1][1].values())


def test_cascade_two_rounds_matches_euler_oracle():
    g = ring_graph()
    caps = {"A": 1.0, "B": 1.6, "C": 6.0, "D": 6.0}
    res = cascade_stress_test(g, caps, ForcingSpec(np.array([12.0, 3.0, 0, 0]), 0.3), 2.0, 0.2)
    failed, losses, survivors = oracles.euler_cascade(
        g.banks, g.weights, caps, [12.0, 3.0, 0, 0], 0.3, 2.0, 0.2
    )
    assert res.failed == failed
    assert survivors == ["C", "D"]
    for bank in losses:
        assert res.losses[bank] == pytest.approx(losses[bank], abs=1e-3)


def test_cascade_sub_threshold_shock_is_quiet():
    g = abcd_graph()
    caps = {b: 50.0 for b in g.banks}
    res = cascade_stress_test(g, caps, ForcingSpec(np.array([12.0, 0, 0, 0])), 2.0, 0.2)
    assert res.failed == []
    assert res.rounds == 0
    assert res.stabilization_time == 0.0
    assert res.post_lambda2 == pytest.approx(res.pre_lambda2)
    assert res.losses == {}


def test_cascade_collapse_to_one_bank_reports_zero():
    g = graph_of([[0, 2], [2, 0]], banks=["A", "B"])
    res = cascade_stress_test(
        g, {"A": 0.5, "B": 50.0}, ForcingSpec(np.array([10.0, 0.0])), 1.0, 0.5
    )
    assert [b for _, b in res.failed] == ["A"]
    assert res.post_lambda2 == 0.0


def test_cascade_deterministic():
    g = ring_graph()
    caps = {"A": 1.0, "B": 1.6, "C": 6.0, "D": 6.0}
    shock = ForcingSpec(np.array([12.0, 3.0, 0, 0]), 0.3)
    a = cascade_stress_test(g, caps, shock, 2.0, 0.2)
    b = cascade_stress_test(g, caps, shock, 2.0, 0.2)
    assert a.failed == b.failed
    assert a.losses == b.losses
    assert a.history == b.history


def test_cascade_input_errors():
    g = abcd_graph()
    caps = {b: 1.0 for b in g.banks}
    shock = ForcingSpec(np.zeros(4))
    with pytest.raises(DomainError):
        cascade_stress_test(g, caps, shock, 2.0, 0.0)
    with pytest.raises(DomainError):
        cascade_stress_test(g, caps, shock, 0.1, 0.2)
    with pytest.raises(DomainError, match="capitals missing"):
        cascade_stress_test(g, {"A": 1.0}, shock, 2.0, 0.2)
    with pytest.raises(DomainError):
        cascade_stress_test(g, {**caps, "B": 0.0}, shock, 2.0, 0.2)
    with pytest.raises(DomainError):
        cascade_stress_test(g, caps, ForcingSpec(np.zeros(3)), 2.0, 0.2)


# ---------------------------------------------------------------------------
# greedy deleveraging


def test_zero_targets_leave_graph_unchanged():
    g = complete_graph(3, 1.0)
    out = greedy_deleverage(g, {})
    assert np.array_equal(out.weights, g.weights)
    assert out.weights is not g.weights


def test_tie_break_is_lexicographic():
    g = complete_graph(3, 1.0)
    out = greedy_deleverage(g, {"N1": 1.0}, step=1.0)
    assert out.weights.tolist() == [
        [0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
    ]


def test_greedy_meets_targets_and_matches_exhaustive_search():
    w = np.array([[0, 2, 1, 3], [2, 0, 0, 0.5], [1, 0, 0, 1], [3, 0.5, 1, 0]])
    g = graph_of(w, banks=["A", "B", "C", "D"])
    targets = {"A": 1.0, "C": 0.5}
    import warnings as _w

    with _w.catch_warnings():
        _w.simplefilter("error")
        out = greedy_deleverage(g, targets, step=0.5)
    lam_out = spectrum_of(out).lambda2()
    assert spectrum_of(g).lambda2() == pytest.approx(2.1351148459220464, rel=1e-9)
    assert lam_out == pytest.approx(1.0999474527999915, rel=1e-9)
    best = oracles.enumerate_deleverage(w, [1.0, 0.0, 0.5, 0.0], 0.5)
    assert lam_out == pytest.approx(best, rel=1e-9)
    cuts = g.degrees() - out.degrees()
    # both targets met through the shared A-C edge; C overshoots by one step
    assert cuts == pytest.approx([1.0, 0.0, 1.0, 0.0], abs=1e-12)


def test_greedy_overshoot_never_exceeds_one_step(rng):
    # a bank with no target absorbs at most one step of overshoot, so with
    # edges >= 0.5 a complete 5-graph always has room for 1.0 in 0.3 steps
    amount, step = 1.0, 0.3
    for _ in range(5):
        g = random_connected(rng, 5)
        victim = g.banks[1]
        out = greedy_deleverage(g, {victim: amount}, step=step)
        cut = g.degrees() - out.degrees()
        assert cut[1] >= amount - step * (1 + 1e-9)
        for j in (0, 2, 3, 4):
            assert cut[j] <= step * (1 + 1e-9)
        assert np.all(out.weights >= -1e-12)
        assert np.allclose(out.weights, out.weights.T)


def test_greedy_error_cases():
    g = complete_graph(3, 1.0)
    with pytest.raises(DomainError):
        greedy_deleverage(g, {"N0": -0.5})
    with pytest.raises(DomainError, match="cut more than it holds"):
        greedy_deleverage(g, {"N0": 5.0})
    with pytest.raises(DomainError, match="step"):
        greedy_deleverage(g, {"N0": 1.0}, step=1.5)
    with pytest.raises(DomainError):
        greedy_deleverage(g, {"N0": 1.0}, step=0.0)


def test_greedy_blocked_by_counterparty_overshoot():
    g = graph_of([[0, 2, 0], [2, 0, 0], [0, 0, 0]], banks=["A", "B", "C"])
    with pytest.raises(DomainError, match="no admissible cut left for A"):
        greedy_deleverage(g, {"A": 2.0, "B": 0.2}, step=0.2)


# ---------------------------------------------------------------------------
# scenario files


def scenario_doc():
    return {
        "shock": {"A": 12.0},
        "onset": 0.0,
        "horizon": 2.0,
        "dt": 0.2,
        "capitals": {"A": 1.0, "B": 10.0, "C": 10.0, "D": 10.0},
    }


def test_load_scenario_round_trip(tmp_path):
    g = abcd_graph()
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_doc()), encoding="utf-8")
    forcing, capitals, horizon, dt = load_scenario(path, g)
    assert forcing.vector.tolist() == [12.0, 0.0, 0.0, 0.0]
    assert forcing.onset == 0.0
    assert capitals == scenario_doc()["capitals"]
    assert (horizon, dt) == (2.0, 0.2)


def test_load_scenario_errors(tmp_path):
    g = abcd_graph()
    with pytest.raises(InputError, match="not found"):
        load_scenario(tmp_path / "missing.json", g)

    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(InputError, match="invalid JSON"):
        load_scenario(bad, g)

    doc = scenario_doc()
    del doc["horizon"]
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(InputError, match="horizon"):
        load_scenario(partial, g)

    doc = scenario_doc()
    doc["shock"]["ZZ"] = 1.0
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(InputError, match="ZZ"):
        load_scenario(unknown, g)

    doc = scenario_doc()
    del doc["capitals"]["D"]
    uncovered = tmp_path / "uncovered.json"
    uncovered.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(InputError, match="D"):
        load_scenario(uncovered, g)


def test_cascade_to_json(tmp_path):
    g = abcd_graph()
    caps = {"A": 1.0, "B": 10.0, "C": 10.0, "D": 10.0}
    res = cascade_stress_test(g, caps, ForcingSpec(np.array([12.0, 0, 0, 0])), 2.0, 0.2)
    path = tmp_path / "out.json"
    cascade_to_json(res, path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    assert doc["failed"] == [{"round": 1, "bank": "A"}]
    assert doc["rounds"] == 1
    assert doc["losses"]["A"] == pytest.approx(res.losses["A"])
    assert len(doc["history"]) == len(res.history)
