import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from semlink import power
from semlink.errors import ConfigError, InfeasibleSignalError, UnsupportedError

D, RC = 1024, 0.4375


def test_tangent_line_values():
    mu, tau = power.tangent_line(1.0, D, RC)
    assert mu == pytest.approx(-9.426694246681006, rel=1e-12)
    assert tau == pytest.approx(3.83945872616484, rel=1e-12)


def test_rho_hat_at_zero_power():
    assert power.rho_hat(0.0, 1.0, D, RC) == pytest.approx(1.0, abs=1e-15)


def test_rho_hat_half_at_threshold():
    g = 0.7
    assert power.rho_hat(power.threshold_power(g, RC), g, D, RC) == pytest.approx(0.5, abs=1e-12)


def test_surrogate_branches():
    g = 0.4
    pt = float(power.threshold_power(g, RC))
    mu, tau = power.tangent_line(g, D, RC)
    for p in (0.0, 0.3 * pt, 0.99 * pt):
        assert power.surrogate_g(p, g, D, RC) == pytest.approx(mu * p + tau, rel=1e-12)
    for p in (pt, 1.01 * pt, 3 * pt):
        assert power.surrogate_g(p, g, D, RC) == pytest.approx(power.rho_hat(p, g, D, RC), rel=1e-12)


@given(st.floats(0.01, 10), st.floats(32, 4096), st.floats(0.05, 1.0))
def test_surrogate_continuous_and_c1_at_threshold(g, d, rc):
    pt = float(power.threshold_power(g, rc))
    mu, tau = power.tangent_line(g, d, rc)
    assert mu * pt + tau == pytest.approx(0.5, abs=1e-9)
    assert float(power.surrogate_slope(pt, g, d, rc)) == pytest.approx(mu, rel=1e-9)


@given(st.floats(0.01, 10), st.floats(32, 4096), st.floats(0.05, 1.0))
def test_surrogate_convex(g, d, rc):
    pt = float(power.threshold_power(g, rc))
    p = np.linspace(0, 4 * pt, 401)
    slope = power.surrogate_slope(p, g, d, rc)
    assert np.all(np.diff(slope) >= -1e-9 * np.abs(slope).max())


def _problem(rng, b):
    return power.AllocationProblem(rng.uniform(0.05, 10, b), rng.exponential(1.0, b),
                                   p_ave=rng.uniform(0.3, 3))


def test_two_packet_example():
    prob = power.AllocationProblem([10.0, 1.0], [0.3, 0.3], 1.0)
    res = power.solve_semantic_pa(prob)
    assert res.powers[0] == pytest.approx(1.489, abs=1e-3)
    assert res.powers.sum() == pytest.approx(2.0, abs=1e-9)
    # independent grid oracle value (step 1e-3)
    assert res.objective <= 2.56732350953744 + 1e-6
    assert res.objective == pytest.approx(2.567321890, abs=1e-8)


def test_symmetric_instance_is_equal_split():
    prob = power.AllocationProblem([2.0, 2.0, 2.0], [0.8, 0.8, 0.8], 1.3)
    np.testing.assert_allclose(power.solve_semantic_pa(prob).powers, 1.3, atol=1e-9)


def test_single_packet_gets_budget():
    res = power.solve_semantic_pa(power.AllocationProblem([3.0], [0.2], 2.5))
    assert res.powers[0] == pytest.approx(2.5, abs=1e-9)


def test_zero_gain_packet_gets_nothing():
    res = power.solve_semantic_pa(power.AllocationProblem([1.0, 5.0, 1.0], [1.0, 0.0, 1.0], 1.0))
    assert res.powers[1] == 0.0
    assert res.powers.sum() == pytest.approx(3.0, abs=1e-9)


def test_all_zero_gains_rejected():
    with pytest.raises(InfeasibleSignalError):
        power.solve_semantic_pa(power.AllocationProblem([1.0, 1.0], [0.0, 0.0], 1.0))


def test_problem_validation():
    with pytest.raises(ConfigError):
        power.AllocationProblem([1.0], [1.0, 2.0], 1.0)
    with pytest.raises(ConfigError):
        power.AllocationProblem([-1.0, 2.0], [1.0, 2.0], 1.0)
    with pytest.raises(ConfigError):
        power.AllocationProblem([1.0], [1.0], 0.0)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_solver_kkt_and_budget(b, seed):
    rng = np.random.default_rng(seed)
    prob = _problem(rng, b)
    res = power.solve_semantic_pa(prob)
    p = res.powers
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(prob.budget, rel=1e-9)
    # stationarity: active packets share the multiplier, inactive ones have larger slope
    grad = prob.weights * power.surrogate_slope(p, prob.gains, D, RC)
    active = p > 1e-9 * prob.budget
    lam = -grad[active]
    assert np.ptp(lam) <= 1e-5 * max(1.0, lam.max())
    assert np.all(-grad[~active] <= lam.max() * (1 + 1e-6))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**32 - 1))
def test_solver_beats_grid_oracle(b, seed):
    prob = _problem(np.random.default_rng(seed), b)
    assert power.solve_semantic_pa(prob).objective <= power.brute_force_oracle(prob).objective + 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_solver_not_worse_than_baselines_on_surrogate(b, seed):
    prob = _problem(np.random.default_rng(seed), b)
    best = power.solve_semantic_pa(prob).objective
    for p in (power.equal_pa(b, prob.p_ave), power.waterfill(prob.gains, prob.p_ave)):
        assert best <= power.evaluate(prob, p).objective + 1e-9


def test_waterfill_closed_form():
    np.testing.assert_allclose(power.waterfill([1.0, 0.5], 1.0), [1.5, 0.5], atol=1e-9)
    # weak channel below the water level is switched off
    np.testing.assert_allclose(power.waterfill([1.0, 0.1], 0.5), [1.0, 0.0], atol=1e-9)


@given(st.lists(st.floats(0.01, 20), min_size=1, max_size=30), st.floats(0.1, 10))
def test_waterfill_budget_and_level(gains, p_ave):
    g = np.array(gains)
    p = power.waterfill(g, p_ave)
    assert p.sum() == pytest.approx(g.size * p_ave, rel=1e-9)
    on = p > 1e-9
    level = p[on] + 1 / g[on]
    assert np.ptp(level) <= 1e-6 * level.max()
    assert np.all(1 / g[~on] >= level.max() - 1e-6)


def test_oracle_limits():
    with pytest.raises(UnsupportedError):
        power.brute_force_oracle(power.AllocationProblem(np.ones(4), np.ones(4), 1.0))
    res = power.brute_force_oracle(power.AllocationProblem([1.0, 1.0, 1.0], [1, 1, 1], 1.0), 0.05)
    assert res.extra["grid_points"] == math.comb(60 + 2, 2)


def test_instance_csv_round_trip(tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("B,P_ave,D,R_c,g,w\n# comment\n2,1,1024,0.4375,0.3,0.3,10,1\n")
    probs = power.read_instances(src)
    assert len(probs) == 1 and probs[0].weights.tolist() == [10.0, 1.0]
    out = tmp_path / "out.csv"
    power.write_results(out, [(0, "semantic", power.solve_semantic_pa(probs[0]))])
    lines = out.read_text().splitlines()
    assert lines[0] == "instance,policy,objective_surrogate,objective_rho_hat,P_1,P_2"
    assert lines[1].startswith("0,semantic,2.5673218")


def test_instance_csv_bad_row(tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("2,1,1024,0.4375,0.3,10,1\n")
    with pytest.raises(ConfigError):
        power.read_instances(src)
