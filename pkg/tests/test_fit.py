import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkes_cpd import (EventLog, FitConfig, HawkesModel, Topology, fit_em, log_likelihood,
                        profile_beta, simulate)
from hawkes_cpd.fit import InsufficientDataError, em_iteration, fit_window, responsibilities

from conftest import random_model

CHAIN = Topology(("a", "b", "c"), np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], bool))


def chain_model(beta=1.0):
    return HawkesModel.build([0.5, 0.4, 0.3],
                             [[0.3, 0.15, 0.0], [0.2, 0.25, 0.1], [0.0, 0.2, 0.3]], beta, CHAIN)


def test_poisson_recovery():
    # alpha sits on the boundary, so single fits scatter; judge the sampling distribution
    model = HawkesModel.build([2.0], [[0.0]], 1.0)
    se = np.sqrt(2.0 / 1000.0)
    mu, alpha = [], []
    for seed in range(50):
        fitted = fit_em(simulate(model, 1000.0, seed), model.topology, 1.0,
                        FitConfig(max_iterations=5000)).model
        mu.append(fitted.mu[0])
        alpha.append(fitted.alpha[0, 0])
    mu, alpha = np.array(mu), np.array(alpha)
    # the boundary also biases mu down slightly, so compare with the per-fit band
    assert abs(mu.mean() - 2.0) < 3 * se
    assert alpha.mean() < 0.05
    ok = (np.abs(mu - 2.0) < 3 * se) & (alpha < 0.05)
    assert ok.mean() >= 0.8


def test_masked_entries_are_exactly_zero():
    log = simulate(chain_model(), 300.0, 1)
    report = fit_em(log, CHAIN, 1.0)
    assert report.model.alpha[0, 2] == 0.0 and report.model.alpha[2, 0] == 0.0


def test_mask_holds_at_every_iteration():
    log = simulate(chain_model(), 200.0, 2)
    model = fit_em(log, CHAIN, 1.0, FitConfig(max_iterations=1)).model
    for _ in range(20):
        model = em_iteration(model, log)
        assert np.all(model.alpha[~CHAIN.adjacency] == 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_likelihood_trace_is_monotone(d, seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, d)
    log = simulate(model, 60.0, seed)
    if len(log) == 0:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = fit_em(log, model.topology, model.beta, FitConfig(max_iterations=200))
    assert np.all(np.diff(report.likelihood_trace) >= -1e-10)
    assert report.likelihood_trace[-1] == report.final_log_likelihood


@pytest.mark.parametrize("seed", range(3))
def test_final_likelihood_matches_core(seed):
    model = random_model(np.random.default_rng(seed), 3)
    log = simulate(model, 150.0, seed)
    report = fit_em(log, model.topology, model.beta)
    assert report.final_log_likelihood == pytest.approx(log_likelihood(report.model, log),
                                                        abs=1e-8)


def test_fixed_point():
    cfg = FitConfig(max_iterations=5000)
    log = simulate(chain_model(), 1000.0, 4)
    report = fit_em(log, CHAIN, 1.0, cfg)
    assert report.converged
    again = em_iteration(report.model, log)
    assert np.max(np.abs(again.mu - report.model.mu)) < 10 * cfg.tolerance
    assert np.max(np.abs(again.alpha - report.model.alpha)) < 10 * cfg.tolerance


def test_responsibilities_sum_to_one():
    model = chain_model()
    log = simulate(model, 80.0, 5)
    p_bg, p_parent = responsibilities(model, log)
    np.testing.assert_allclose(p_bg + p_parent.sum(axis=1), 1.0, atol=1e-12)
    # parents strictly precede and respect the mask
    assert np.all(np.triu(p_parent) == 0)
    masked = ~CHAIN.adjacency[log.nodes[:, None], log.nodes[None, :]]
    assert np.all(p_parent[masked] == 0)


def test_accumulator_em_matches_responsibility_em():
    model = chain_model()
    log = simulate(model, 80.0, 6)
    p_bg, p_parent = responsibilities(model, log)
    horizon = log.horizon
    mu = np.bincount(log.nodes, weights=p_bg, minlength=3) / horizon
    num = np.zeros((3, 3))
    np.add.at(num, (log.nodes[:, None].repeat(len(log), 1), log.nodes[None, :].repeat(len(log), 0)),
              p_parent)
    den = np.bincount(log.nodes, weights=1 - np.exp(-model.beta * (horizon - log.times)),
                      minlength=3)
    alpha = np.where(CHAIN.adjacency, num / den[None, :], 0.0)
    step = em_iteration(model, log)
    np.testing.assert_allclose(step.mu, mu, rtol=1e-10)
    np.testing.assert_allclose(step.alpha, alpha, rtol=1e-10, atol=1e-15)


def test_zero_event_node_keeps_floor():
    log = EventLog(np.array([1.0, 2.0, 2.5, 4.0]), np.array([0, 0, 0, 0]), 10.0, 2)
    report = fit_em(log, Topology.complete(2), 1.0)
    assert report.model.mu[1] == FitConfig().mu_floor
    assert np.isfinite(report.final_log_likelihood)


def test_empty_log_is_rejected():
    with pytest.raises(InsufficientDataError):
        fit_em(EventLog(np.empty(0), np.empty(0, int), 10.0, 1), Topology.complete(1), 1.0)


def test_empty_window_fit():
    log = EventLog(np.array([1.0]), np.array([0]), 10.0, 2)
    report = fit_window(log, Topology.complete(2), 1.0, 5.0, 10.0)
    assert np.all(report.model.mu == FitConfig().mu_floor)
    assert np.all(report.model.alpha == 0)


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        FitConfig(mu_floor=0.0)
    with pytest.raises(ValueError):
        FitConfig(max_iterations=0)
    assert FitConfig(beta_grid=[0.1, 1]).beta_grid == (0.1, 1.0)


def test_unstable_fit_warns_instead_of_raising():
    model = HawkesModel.build([1.0], [[1.2]], 1.0)
    with pytest.warns(RuntimeWarning):
        assert model.warn_if_unstable() == pytest.approx(1.2)


def test_single_grid_value():
    log = simulate(chain_model(0.2), 400.0, 7)
    beta, report = profile_beta(log, CHAIN, [0.2])
    assert beta == 0.2 and report.model.beta == 0.2


def test_duplicated_grid_value_ties_to_first():
    log = simulate(chain_model(), 200.0, 8)
    beta, report = profile_beta(log, CHAIN, [0.5, 1.0, 1.0])
    assert beta == 1.0
    with pytest.raises(ValueError):
        profile_beta(log, CHAIN, [])


def test_profile_picks_the_likelihood_maximiser():
    log = simulate(chain_model(), 500.0, 9)
    grid = [0.25, 0.5, 1.0, 2.0]
    beta, report = profile_beta(log, CHAIN, grid)
    lls = [fit_em(log, CHAIN, b).final_log_likelihood for b in grid]
    assert beta == grid[int(np.argmax(lls))]
    assert report.final_log_likelihood == max(lls)
