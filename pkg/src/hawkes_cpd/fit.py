"""Maximum-likelihood fitting of (mu, alpha) by EM over the branching structure."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .core import (EventLog, ExponentialKernel, HawkesModel, Topology,
                   accumulators_at_events, compensator_weights)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 500
    tolerance: float = 1e-8          # per-event log-likelihood gain and parameter step
    mu_floor: float = 1e-10
    beta_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.mu_floor > 0:
            raise ValueError("mu_floor must be positive")
        if self.beta_grid is not None:
            grid = tuple(float(b) for b in self.beta_grid)
            if not grid or any(b <= 0 for b in grid):
                raise ValueError("beta_grid must be a nonempty list of positive rates")
            object.__setattr__(self, "beta_grid", grid)


@dataclass
class FitReport:
    model: HawkesModel
    final_log_likelihood: float
    iterations: int
    converged: bool
    likelihood_trace: np.ndarray = field(repr=False)


@dataclass
class _Window:
    """Sufficient statistics of the events being fitted."""
    acc: np.ndarray          # (N, D) left-limit accumulators
    nodes: np.ndarray        # (N,)
    weights: np.ndarray      # (D,) compensator mass per source node
    duration: float
    onehot: sparse.csr_matrix
    offset: np.ndarray | float = 0.0    # fixed extra intensity at each event
    offset_comp: float = 0.0            # its compensator over the window

    @property
    def size(self) -> int:
        return self.nodes.size


def _onehot(nodes: np.ndarray, d: int) -> sparse.csr_matrix:
    return sparse.csr_matrix((np.ones(nodes.size), (nodes, np.arange(nodes.size))),
                             shape=(d, nodes.size))


def _window(log: EventLog, beta: float, start: float, end: float, history: bool) -> _Window:
    lo = np.searchsorted(log.times, start, side="right")
    hi = np.searchsorted(log.times, end, side="right")
    h_lo = 0 if history else lo
    times, nodes = log.times[h_lo:hi], log.nodes[h_lo:hi]
    d = log.node_count
    acc = accumulators_at_events(times, nodes, d, beta)[lo - h_lo:]
    weights = compensator_weights(times, nodes, d, beta, start, end)
    win_nodes = log.nodes[lo:hi]
    return _Window(acc, win_nodes, weights, end - start, _onehot(win_nodes, d))


def carryover_window(times: np.ndarray, nodes: np.ndarray, node_count: int, beta: float,
                     start: float, end: float, carry_acc: np.ndarray,
                     carry_alpha: np.ndarray) -> _Window:
    """Window statistics for events in ``(start, end]`` only.

    ``carry_acc`` are the accumulators at ``start`` from earlier events; they
    act through the fixed ``carry_alpha`` and enter as a known offset.
    """
    acc = accumulators_at_events(times, nodes, node_count, beta)
    weights = compensator_weights(times, nodes, node_count, beta, start, end)
    decay = np.exp(-beta * (times - start))
    offset = (carry_alpha[nodes] @ carry_acc) * decay
    offset_comp = float(carry_alpha.sum(axis=0) @ carry_acc * -np.expm1(-beta * (end - start))
                        / beta)
    return _Window(acc, nodes, weights, end - start, _onehot(nodes, node_count),
                   offset, offset_comp)


def _log_likelihood(win: _Window, mu: np.ndarray, alpha: np.ndarray):
    lam = mu[win.nodes] + np.einsum("kj,kj->k", alpha[win.nodes], win.acc) + win.offset
    ll = (np.sum(np.log(lam)) - mu.sum() * win.duration - alpha.sum(axis=0) @ win.weights
          - win.offset_comp)
    return float(ll), lam


def window_log_likelihood(win: _Window, model: HawkesModel) -> float:
    return _log_likelihood(win, model.mu, model.alpha)[0]


def _em_step(win: _Window, mu, alpha, lam, mu_floor):
    inv = 1.0 / lam
    background = win.onehot @ inv
    mu_new = np.maximum(mu * background / win.duration, mu_floor)
    triggered = win.onehot @ (win.acc * inv[:, None])
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha_new = np.where(win.weights[None, :] > 0,
                             alpha * triggered / win.weights[None, :], 0.0)
    return mu_new, alpha_new


def initial_parameters(counts: np.ndarray, duration: float, mask: np.ndarray,
                       mu_floor: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    mu = np.maximum(counts / (2.0 * duration), mu_floor)
    alpha = np.where(mask, 0.1, 0.0)
    return mu, alpha


def _run_em(win: _Window, mu, alpha, mask, config: FitConfig):
    mu = np.maximum(np.asarray(mu, dtype=float), config.mu_floor)
    alpha = np.where(mask, np.asarray(alpha, dtype=float), 0.0)
    if win.size == 0:
        mu = np.full_like(mu, config.mu_floor)
        alpha = np.zeros_like(alpha)
        ll, _ = _log_likelihood(win, mu, alpha)
        return mu, alpha, ll, 0, True, np.array([ll])
    return _iterate(win, mu, alpha, config)


def _iterate(win: _Window, mu, alpha, config: FitConfig):
    trace = []
    converged = False
    iterations = 0
    threshold = config.tolerance * win.size
    ll, lam = _log_likelihood(win, mu, alpha)
    trace.append(ll)
    while iterations < config.max_iterations:
        mu_new, alpha_new = _em_step(win, mu, alpha, lam, config.mu_floor)
        step = max(np.max(np.abs(mu_new - mu)), np.max(np.abs(alpha_new - alpha)))
        mu, alpha = mu_new, alpha_new
        iterations += 1
        ll_new, lam = _log_likelihood(win, mu, alpha)
        trace.append(ll_new)
        gain = ll_new - ll
        ll = ll_new
        # EM crawls near the optimum: small gains alone do not mean small steps
        if gain < threshold and step < config.tolerance:
            converged = True
            break
    return mu, alpha, ll, iterations, converged, np.array(trace)


def fit_em(log: EventLog, topology: Topology, beta: float, config: FitConfig = FitConfig(),
           init: HawkesModel | None = None) -> FitReport:
    """EM estimate of ``(mu, alpha)`` on ``[0, log.horizon]`` for a fixed decay ``beta``.

    Entries of ``alpha`` outside the topology's adjacency are fixed at zero.
    ``init`` warm-starts the iteration; otherwise background rates start at half
    the empirical rate and unmasked influences at 0.1.
    """
    if len(log) == 0:
        raise InsufficientDataError("cannot fit a Hawkes model to an empty event log")
    if log.node_count != topology.node_count:
        raise ValueError("log and topology disagree on the number of nodes")
    report = fit_window(log, topology, beta, 0.0, log.horizon, config, init=init, history=True)
    report.model.warn_if_unstable()
    return report


def fit_window(log: EventLog, topology: Topology, beta: float, start: float, end: float,
               config: FitConfig = FitConfig(), init: HawkesModel | None = None,
               history: bool = False) -> FitReport:
    """EM fit on events in ``(start, end]``.

    With ``history=False`` earlier events are ignored entirely, which is the
    post-change hypothesis of a change at ``start``. An empty window yields
    ``mu = mu_floor`` everywhere and ``alpha = 0``.
    """
    mask = topology.adjacency
    win = _window(log, beta, start, end, history)
    if init is None:
        mu0, alpha0 = initial_parameters(np.bincount(win.nodes, minlength=topology.node_count),
                                         end - start, mask, config.mu_floor)
    else:
        mu0, alpha0 = init.mu, init.alpha
    mu, alpha, ll, iterations, converged, trace = _run_em(win, mu0, alpha0, mask, config)
    model = HawkesModel(mu, alpha, ExponentialKernel(beta), topology)
    return FitReport(model, ll, iterations, converged, trace)


def em_iteration(model: HawkesModel, log: EventLog, mu_floor: float = 1e-10) -> HawkesModel:
    """One EM update from ``model`` on the whole log."""
    win = _window(log, model.beta, 0.0, log.horizon, True)
    _, lam = _log_likelihood(win, model.mu, model.alpha)
    mu, alpha = _em_step(win, model.mu, model.alpha, lam, mu_floor)
    return model.replace(mu=mu, alpha=alpha)


def responsibilities(model: HawkesModel, log: EventLog) -> tuple[np.ndarray, np.ndarray]:
    """Branching probabilities ``(p_background[k], p_parent[k, l])`` for small logs.

    Dense ``N x N``; intended for inspection and testing.
    """
    t, nodes = log.times, log.nodes
    dt = t[:, None] - t[None, :]
    earlier = dt > 0
    kern = np.where(earlier, model.beta * np.exp(-model.beta * np.where(earlier, dt, 0.0)), 0.0)
    weight = model.alpha[nodes[:, None], nodes[None, :]] * kern
    background = model.mu[nodes]
    total = background + weight.sum(axis=1)
    return background / total, weight / total[:, None]


def profile_beta(log: EventLog, topology: Topology, grid: Sequence[float],
                 config: FitConfig = FitConfig()) -> tuple[float, FitReport]:
    """Fit for every decay rate in ``grid``; return the likelihood maximiser.

    Ties go to the smaller rate, then to the earlier grid position.
    """
    grid = [float(b) for b in grid]
    if not grid:
        raise ValueError("beta grid must be nonempty")
    best = None
    for idx, beta in enumerate(grid):
        report = fit_em(log, topology, beta, config)
        key = (report.final_log_likelihood, -beta, -idx)
        if best is None or key > best[0]:
            best = (key, beta, report)
    _, beta, report = best
    return beta, report


def fit_prepared(win: _Window, topology: Topology, beta: float, mu0, alpha0,
                 config: FitConfig = FitConfig()) -> FitReport:
    """EM on precomputed window statistics (see :func:`carryover_window`)."""
    mu, alpha, ll, iterations, converged, trace = _run_em(win, mu0, alpha0, topology.adjacency,
                                                          config)
    return FitReport(HawkesModel(mu, alpha, ExponentialKernel(beta), topology), ll,
                     iterations, converged, trace)


__all__ = ["FitConfig", "FitReport", "InsufficientDataError", "fit_em", "fit_window",
           "fit_prepared", "carryover_window", "window_log_likelihood",
           "em_iteration", "responsibilities", "profile_beta", "initial_parameters"]
