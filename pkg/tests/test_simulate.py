import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hawkes_cpd import (ChangeScenario, FitConfig, HawkesModel, StabilityError, Topology, fit_em,
                        make_preset, simulate, simulate_with_change)
from hawkes_cpd.core import rescaled_intervals
from hawkes_cpd.simulate import PRESETS, apply_change_design, get_preset

from conftest import random_model


def poisson(d, m):
    return HawkesModel.build(np.full(d, m), np.zeros((d, d)), 1.0)


def test_poisson_counts_match_law():
    m, horizon, seeds = 1.5, 20.0, 500
    counts = np.array([simulate(poisson(2, m), horizon, s).counts() for s in range(seeds)])
    se = np.sqrt(m * horizon / seeds)
    assert np.all(np.abs(counts.mean(axis=0) - m * horizon) < 3 * se)
    # Poisson dispersion
    assert counts.var(axis=0, ddof=1) == pytest.approx(m * horizon, rel=0.2)


def test_zero_horizon_is_empty():
    log = simulate(poisson(3, 1.0), 0.0, 1)
    assert len(log) == 0 and log.horizon == 0.0 and log.node_count == 3


def test_stationary_rate():
    model = HawkesModel.build([1.0], [[0.5]], 0.2)
    horizon = 20000.0
    log = simulate(model, horizon, 7)
    assert len(log) / horizon == pytest.approx(2.0, rel=0.05)


def test_unstable_model_rejected():
    model = HawkesModel.build([1.0, 1.0], [[0.6, 0.5], [0.5, 0.6]], 1.0)
    with pytest.raises(StabilityError):
        simulate(model, 10.0, 0)


def test_deterministic_given_seed():
    model = random_model(np.random.default_rng(2), 4)
    assert simulate(model, 200.0, 11) == simulate(model, 200.0, 11)
    assert simulate(model, 200.0, 11) != simulate(model, 200.0, 12)
    scenario = ChangeScenario(model, model.replace(mu=3 * model.mu), 50.0, 200.0)
    assert simulate_with_change(scenario, 5) == simulate_with_change(scenario, 5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(0.0, 80.0))
def test_outputs_are_valid_logs(d, seed, horizon):
    model = random_model(np.random.default_rng(seed), d)
    log = simulate(model, horizon, seed)
    assert np.all(np.diff(log.times) >= 0)
    assert np.all((log.times >= 0) & (log.times <= horizon))
    assert np.all((log.nodes >= 0) & (log.nodes < d))


def test_poisson_interarrivals_pass_chi_square():
    rate = 2.0
    edges = stats.expon.ppf(np.linspace(0, 1, 11), scale=1 / rate)
    failures = 0
    for seed in range(100):
        gaps = np.diff(simulate(poisson(1, rate), 250.0, seed).times, prepend=0.0)
        observed = np.histogram(gaps, edges)[0]
        expected = np.full(10, gaps.size / 10)
        if stats.chisquare(observed, expected).pvalue < 0.01:
            failures += 1
    assert failures <= 5


def test_time_rescaling_with_fitted_compensator():
    rng = np.random.default_rng(3)
    model = random_model(rng, 3, beta=1.0)
    log = simulate(model, 1500.0, 21)
    fitted = fit_em(log, model.topology, 1.0, FitConfig(max_iterations=2000)).model
    x = rescaled_intervals(fitted, log)
    assert stats.kstest(x, "expon").pvalue > 0.01


# -- change injection ----------------------------------------------------------

def test_no_change_equals_plain_simulation():
    model = random_model(np.random.default_rng(4), 3)
    scenario = ChangeScenario(model, model.replace(mu=2 * model.mu), None, 300.0)
    assert simulate_with_change(scenario, 9) == simulate(model, 300.0, 9)


def test_doubled_background_doubles_rate():
    pre = poisson(2, 1.0)
    post = pre.replace(mu=2 * pre.mu)
    horizon = 40.0
    scenario = ChangeScenario(pre, post, horizon / 2, horizon)
    before = after = 0
    for seed in range(500):
        t = simulate_with_change(scenario, seed).times
        before += np.sum(t <= horizon / 2)
        after += np.sum(t > horizon / 2)
    assert after / before == pytest.approx(2.0, rel=0.05)


def test_change_at_zero_matches_post_model():
    pre = HawkesModel.build([0.4, 0.2], [[0.3, 0.1], [0.2, 0.2]], 1.0)
    post = pre.replace(mu=np.array([1.0, 0.6]), alpha=np.array([[0.1, 0.3], [0.0, 0.4]]))
    horizon, seeds = 30.0, 500
    scenario = ChangeScenario(pre, post, 0.0, horizon)
    a = np.array([simulate_with_change(scenario, s).counts() for s in range(seeds)])
    b = np.array([simulate(post, horizon, 10_000 + s).counts() for s in range(seeds)])
    se = np.sqrt(a.var(axis=0, ddof=1) / seeds + b.var(axis=0, ddof=1) / seeds)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 4 * se)


def test_carryover_switch_only_affects_post_change_part():
    pre = HawkesModel.build([0.5], [[0.8]], 0.5)
    post = pre.replace(mu=2 * pre.mu)
    scenario = ChangeScenario(pre, post, 50.0, 100.0)
    with_carry = simulate_with_change(scenario, 3, carryover=True)
    without = simulate_with_change(scenario, 3, carryover=False)
    np.testing.assert_array_equal(with_carry.times[with_carry.times <= 50.0],
                                  without.times[without.times <= 50.0])


def test_scenario_validation():
    a = poisson(2, 1.0)
    b = HawkesModel.build([1.0, 1.0], np.zeros((2, 2)), 2.0)
    with pytest.raises(ValueError):
        ChangeScenario(a, b, 5.0, 10.0)
    with pytest.raises(ValueError):
        ChangeScenario(a, a, 10.0, 10.0)


# -- presets --------------------------------------------------------------------------

def test_national_preset_double_mu():
    scenario = make_preset("national", 0, change_design="double-mu")
    assert scenario.model_pre.node_count == 51
    assert scenario.model_post.mu.sum() == pytest.approx(2 * scenario.model_pre.mu.sum(),
                                                         rel=1e-14)
    assert scenario.change_time == 365.0
    assert scenario.model_pre.stationary_rates().sum() == pytest.approx(40.0, rel=1e-10)


def test_county_preset_rate():
    scenario = make_preset("county", 0)
    model = scenario.model_pre
    assert model.node_count == 54
    assert model.stationary_rates().sum() == pytest.approx(3.5, rel=1e-10)
    log = simulate(model, 730.0, 0)
    assert len(log) / 730.0 == pytest.approx(3.5, rel=0.1)


def test_halve_mu():
    scenario = make_preset("county", 1, change_design="halve-mu")
    np.testing.assert_allclose(scenario.model_post.mu, 0.5 * scenario.model_pre.mu)
    np.testing.assert_array_equal(scenario.model_post.alpha, scenario.model_pre.alpha)


def test_vanishing_edges_touches_only_selected_sources():
    scenario = make_preset("national", 2, change_design="vanishing-edges")
    pre, post = scenario.model_pre.alpha, scenario.model_post.alpha
    rates = scenario.model_pre.stationary_rates()
    top = set(np.argsort(-rates)[:4].tolist())
    changed = np.argwhere(pre != post)
    assert changed.size and {int(j) for j in changed[:, 1]} == top
    for j in top:
        off = np.delete(post[:, j], j)
        assert np.all(off == 0)
    keep = [j for j in range(51) if j not in top]
    np.testing.assert_array_equal(pre[:, keep], post[:, keep])
    np.testing.assert_array_equal(scenario.model_post.mu, scenario.model_pre.mu)


def test_preset_topology_is_connected_and_planar_like():
    from scipy.sparse.csgraph import connected_components
    topo = make_preset("national", 5).topology
    n, _ = connected_components(topo.adjacency)
    assert n == 1
    edges = (topo.adjacency.sum() - 51) // 2
    assert edges <= 3 * 51 - 6


def test_unknown_preset_and_design():
    with pytest.raises(KeyError):
        make_preset("galactic", 0)
    with pytest.raises(ValueError):
        get_preset("county", change_design="triple-mu")
    with pytest.raises(ValueError):
        apply_change_design(poisson(2, 1.0), "triple-mu")
    assert set(PRESETS) == {"national", "county"}


def test_preset_no_change_option():
    scenario = make_preset("county", 3, change_time=None)
    assert scenario.change_time is None
    assert simulate_with_change(scenario, 1) == simulate(scenario.model_pre, 730.0, 1)


def test_custom_topology_preserved_in_simulation():
    topo = Topology(("x", "y", "z"), np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], bool))
    model = HawkesModel.build([0.5, 0.5, 0.5], np.full((3, 3), 0.3), 1.0, topo)
    assert model.alpha[0, 2] == 0 and model.alpha[2, 0] == 0
    assert simulate(model, 50.0, 0).node_count == 3
