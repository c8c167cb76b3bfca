"""Network Hawkes process with an exponential kernel.

Conventions used throughout the package:

* time is measured in days, rates in events/day;
* ``alpha[i, j]`` is the influence of node ``j``'s events on node ``i``
  (row = receiver, column = source);
* the kernel is ``phi(t) = beta * exp(-beta * t)``, which integrates to one;
* intensities are left-continuous: an event never excites another event
  carrying the identical timestamp.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Kernel contributions below this fraction of their initial size may be dropped
# by bounded-memory consumers.
TRUNCATION_EPS = 1e-8


class DegenerateModelError(ValueError):
    """Raised when an observed event has zero intensity (log of zero)."""


class OrderingError(ValueError):
    """Raised when events arrive out of time order."""


class StabilityError(ValueError):
    """Raised when the influence matrix has spectral radius >= 1."""


@dataclass(frozen=True)
class Event:
    time: float
    node: int

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"event time must be >= 0, got {self.time}")
        if self.node < 0:
            raise ValueError(f"event node must be >= 0, got {self.node}")


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-ordered events on ``node_count`` nodes observed over ``[0, horizon]``.

    Stored as two parallel arrays; ``events`` materialises :class:`Event` objects
    on demand.
    """

    times: np.ndarray
    nodes: np.ndarray
    horizon: float
    node_count: int

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64).reshape(-1)
        nodes = np.ascontiguousarray(self.nodes, dtype=np.int64).reshape(-1)
        if times.shape != nodes.shape:
            raise ValueError("times and nodes must have the same length")
        if self.node_count <= 0:
            raise ValueError("node_count must be positive")
        if self.horizon < 0 or not math.isfinite(self.horizon):
            raise ValueError("horizon must be finite and >= 0")
        if times.size:
            if times[0] < 0:
                raise ValueError("event times must be >= 0")
            if np.any(np.diff(times) < 0):
                raise OrderingError("event times must be nondecreasing")
            if times[-1] > self.horizon:
                raise ValueError(
                    f"event at t={times[-1]} lies beyond horizon {self.horizon}")
            if nodes.min() < 0 or nodes.max() >= self.node_count:
                raise IndexError("event node index out of range")
        times.setflags(write=False)
        nodes.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "node_count", int(self.node_count))

    @classmethod
    def from_events(cls, events: Sequence[Event], horizon: float, node_count: int,
                    sort: bool = False) -> "EventLog":
        times = np.array([e.time for e in events], dtype=np.float64)
        nodes = np.array([e.node for e in events], dtype=np.int64)
        if sort:
            order = np.argsort(times, kind="stable")
            times, nodes = times[order], nodes[order]
        return cls(times, nodes, horizon, node_count)

    @property
    def events(self) -> list[Event]:
        return [Event(float(t), int(n)) for t, n in zip(self.times, self.nodes)]

    def __len__(self):
        return self.times.size

    def counts(self) -> np.ndarray:
        return np.bincount(self.nodes, minlength=self.node_count)

    def restrict(self, end: float, start: float = 0.0) -> "EventLog":
        """Events in ``[start, end]`` shifted so that ``start`` becomes time zero."""
        lo = np.searchsorted(self.times, start, side="left")
        hi = np.searchsorted(self.times, end, side="right")
        return EventLog(self.times[lo:hi] - start, self.nodes[lo:hi], end - start,
                        self.node_count)

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return (self.horizon == other.horizon and self.node_count == other.node_count
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.nodes, other.nodes))


@dataclass(frozen=True, eq=False)
class Topology:
    node_labels: tuple[str, ...]
    adjacency: np.ndarray

    def __post_init__(self):
        labels = tuple(str(s) for s in self.node_labels)
        adj = np.array(self.adjacency, dtype=bool)
        d = len(labels)
        if d == 0:
            raise ValueError("topology needs at least one node")
        if adj.shape != (d, d):
            raise ValueError(f"adjacency must be {d}x{d}, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if len(set(labels)) != d:
            raise ValueError("node labels must be unique")
        np.fill_diagonal(adj, True)
        adj.setflags(write=False)
        object.__setattr__(self, "node_labels", labels)
        object.__setattr__(self, "adjacency", adj)

    @property
    def node_count(self) -> int:
        return len(self.node_labels)

    @classmethod
    def complete(cls, node_count: int, prefix: str = "n") -> "Topology":
        labels = [f"{prefix}{i}" for i in range(node_count)]
        return cls(tuple(labels), np.ones((node_count, node_count), dtype=bool))

    def index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.node_labels)}

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (self.node_labels == other.node_labels
                and np.array_equal(self.adjacency, other.adjacency))


@dataclass(frozen=True)
class ExponentialKernel:
    beta: float

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.beta * np.exp(-self.beta * np.maximum(t, 0.0)), 0.0)

    def integral(self, s):
        """``int_0^s phi``, i.e. ``1 - exp(-beta s)`` for ``s >= 0``."""
        return -np.expm1(-self.beta * np.maximum(np.asarray(s, dtype=float), 0.0))

    @property
    def truncation_horizon(self) -> float:
        return -math.log(TRUNCATION_EPS) / self.beta


def spectral_radius(alpha: np.ndarray, iterations: int = 200, tol: float = 1e-10) -> float:
    """Perron root of a nonnegative matrix by power iteration.

    Iterates on ``alpha + I`` so that periodic (e.g. bipartite) matrices still
    converge; the shift is removed at the end.
    """
    a = np.asarray(alpha, dtype=float)
    if a.size == 0:
        return 0.0
    shifted = a + np.eye(a.shape[0])
    x = np.full(a.shape[0], 1.0 / math.sqrt(a.shape[0]))
    estimate = 0.0
    for _ in range(iterations):
        y = shifted @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new_estimate = float(x @ y)
        x = y / norm
        if abs(new_estimate - estimate) < tol * max(1.0, abs(new_estimate)):
            estimate = new_estimate
            break
        estimate = new_estimate
    return max(estimate - 1.0, 0.0)


@dataclass(frozen=True, eq=False)
class HawkesModel:
    mu: np.ndarray
    alpha: np.ndarray
    kernel: ExponentialKernel
    topology: Topology

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        alpha = np.array(self.alpha, dtype=np.float64)
        d = self.topology.node_count
        if mu.shape != (d,):
            raise ValueError(f"mu must have length {d}, got {mu.shape}")
        if alpha.shape != (d, d):
            raise ValueError(f"alpha must be {d}x{d}, got {alpha.shape}")
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValueError("mu entries must be finite and >= 0")
        if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
            raise ValueError("alpha entries must be finite and >= 0")
        alpha[~self.topology.adjacency] = 0.0
        mu.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def build(cls, mu, alpha, beta: float, topology: Topology | None = None) -> "HawkesModel":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if topology is None:
            topology = Topology.complete(mu.size)
        return cls(mu, np.atleast_2d(np.asarray(alpha, dtype=float)),
                   ExponentialKernel(float(beta)), topology)

    @property
    def beta(self) -> float:
        return self.kernel.beta

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    def branching_ratio(self) -> float:
        return spectral_radius(self.alpha)

    def check_stable(self) -> float:
        rho = self.branching_ratio()
        if rho >= 1.0:
            raise StabilityError(f"spectral radius of alpha is {rho:.6g} >= 1")
        return rho

    def warn_if_unstable(self) -> float:
        rho = self.branching_ratio()
        if rho >= 1.0:
            warnings.warn(f"fitted alpha has spectral radius {rho:.6g} >= 1", RuntimeWarning)
        return rho

    def stationary_rates(self) -> np.ndarray:
        """Per-node long-run event rates ``(I - alpha)^-1 mu``."""
        return np.linalg.solve(np.eye(self.node_count) - self.alpha, self.mu)

    def replace(self, mu=None, alpha=None) -> "HawkesModel":
        return HawkesModel(self.mu if mu is None else mu,
                           self.alpha if alpha is None else alpha,
                           self.kernel, self.topology)

    def compatible_with(self, other: "HawkesModel") -> bool:
        return self.kernel == other.kernel and self.topology == other.topology

    def __eq__(self, other):
        if not isinstance(other, HawkesModel):
            return NotImplemented
        return (self.kernel == other.kernel and self.topology == other.topology
                and np.array_equal(self.mu, other.mu)
                and np.array_equal(self.alpha, other.alpha))


def _check_log(model: HawkesModel, log: EventLog):
    if log.node_count != model.node_count:
        raise ValueError(
            f"log has {log.node_count} nodes but model has {model.node_count}")


# -- intensities ---------------------------------------------------------------

def intensity_direct(model: HawkesModel, log: EventLog, node: int, t: float) -> float:
    """Intensity of ``node`` at ``t`` by explicit summation over past events."""
    _check_log(model, log)
    if not 0 <= node < model.node_count:
        raise IndexError(f"node {node} out of range [0, {model.node_count})")
    past = log.times < t
    dt = t - log.times[past]
    kern = model.beta * np.exp(-model.beta * dt)
    weights = model.alpha[node, log.nodes[past]]
    return float(model.mu[node] + np.sum(weights * kern))


@dataclass
class ExcitationState:
    """Per-node kernel accumulators ``a_j(t) = sum_l beta exp(-beta (t - t_l))``."""

    accumulators: np.ndarray
    last_update: float = 0.0

    @classmethod
    def zeros(cls, node_count: int, t: float = 0.0) -> "ExcitationState":
        return cls(np.zeros(node_count), float(t))

    def copy(self) -> "ExcitationState":
        return ExcitationState(self.accumulators.copy(), self.last_update)


def excitation_advance(state: ExcitationState, model: HawkesModel,
                       new_events: Sequence[Event], t: float) -> ExcitationState:
    """Decay the accumulators to ``t`` and add the kernel mass of ``new_events``.

    ``new_events`` must be ordered and lie in ``[state.last_update, t]``.
    Returns a new state; the input is left untouched.
    """
    if t < state.last_update:
        raise OrderingError(f"cannot advance from {state.last_update} back to {t}")
    beta = model.beta
    acc = state.accumulators * math.exp(-beta * (t - state.last_update))
    prev = state.last_update
    for ev in new_events:
        if ev.time < prev or ev.time > t:
            raise OrderingError(
                f"event at {ev.time} outside [{state.last_update}, {t}] or out of order")
        acc[ev.node] += beta * math.exp(-beta * (t - ev.time))
        prev = ev.time
    return ExcitationState(acc, float(t))


def intensities_from_state(model: HawkesModel, state: ExcitationState) -> np.ndarray:
    return model.mu + model.alpha @ state.accumulators


def accumulators_at_events(times: np.ndarray, nodes: np.ndarray, node_count: int,
                           beta: float, history_times: np.ndarray | None = None,
                           history_nodes: np.ndarray | None = None) -> np.ndarray:
    """Left limits ``a_j(t_k-)`` for every event ``k``; shape ``(N, D)``.

    Events sharing a timestamp do not excite one another. ``history_*`` are
    earlier events (all strictly before ``times[0]`` or equal to it) that
    excite but are not themselves rows of the output.
    """
    n = times.size
    out = np.zeros((n, node_count))
    acc = np.zeros(node_count)
    t_prev = 0.0
    if history_times is not None and history_times.size:
        t_prev = float(history_times[0])
        for th, nh in zip(history_times, history_nodes):
            acc *= math.exp(-beta * (th - t_prev))
            acc[nh] += beta
            t_prev = th
    k = 0
    while k < n:
        t = times[k]
        acc *= math.exp(-beta * (t - t_prev))
        t_prev = t
        m = k
        while m < n and times[m] == t:
            m += 1
        out[k:m] = acc
        for q in range(k, m):
            acc[nodes[q]] += beta
        k = m
    return out


def intensities_at_events(model: HawkesModel, log: EventLog) -> np.ndarray:
    """``lambda_{i_k}(t_k-)`` for every event of ``log`` via the recursion."""
    _check_log(model, log)
    acc = accumulators_at_events(log.times, log.nodes, log.node_count, model.beta)
    return model.mu[log.nodes] + np.einsum("kj,kj->k", model.alpha[log.nodes], acc)


# -- likelihoods -----------------------------------------------------------------

def compensator_weights(times: np.ndarray, nodes: np.ndarray, node_count: int,
                        beta: float, start: float, end: float) -> np.ndarray:
    """``c_j = sum_{l at j, t_l < end} int_{max(start,t_l)}^{end} phi(tau - t_l) dtau``."""
    mask = times < end
    t = times[mask]
    lower = np.maximum(start, t) - t
    mass = np.exp(-beta * lower) - np.exp(-beta * (end - t))
    return np.bincount(nodes[mask], weights=mass, minlength=node_count)


def _window_terms(model: HawkesModel, log: EventLog, start: float, end: float,
                  history: bool):
    lo = np.searchsorted(log.times, start, side="right")
    hi = np.searchsorted(log.times, end, side="right")
    if history:
        h_lo = 0
    else:
        h_lo = lo
    times = log.times[h_lo:hi]
    nodes = log.nodes[h_lo:hi]
    acc = accumulators_at_events(times, nodes, model.node_count, model.beta)[lo - h_lo:]
    win_nodes = log.nodes[lo:hi]
    lam = model.mu[win_nodes] + np.einsum("kj,kj->k", model.alpha[win_nodes], acc)
    weights = compensator_weights(times, nodes, model.node_count, model.beta, start, end)
    compensator = model.mu.sum() * (end - start) + model.alpha.sum(axis=0) @ weights
    return lam, win_nodes, compensator


def log_likelihood(model: HawkesModel, log: EventLog, start: float = 0.0,
                   end: float | None = None, history: bool = True) -> float:
    """Point-process log-likelihood of events in ``(start, end]``.

    With ``history=True`` (default) events at or before ``start`` still excite
    intensities inside the window; with ``history=False`` they are ignored.
    The compensator is evaluated in closed form.
    """
    _check_log(model, log)
    if end is None:
        end = log.horizon
    if not 0 <= start < end <= log.horizon:
        raise ValueError(f"need 0 <= start < end <= horizon, got {start}, {end}")
    lam, nodes, compensator = _window_terms(model, log, start, end, history)
    if np.any(lam <= 0):
        bad = int(nodes[np.argmax(lam <= 0)])
        raise DegenerateModelError(f"zero intensity at an observed event on node {bad}")
    return float(np.sum(np.log(lam)) - compensator)


def log_likelihood_ratio(model_pre: HawkesModel, model_post: HawkesModel, log: EventLog,
                         nu: float, t: float) -> float:
    """Exact log-likelihood ratio of a change at ``nu`` against no change, on ``(nu, t]``.

    Under the change hypothesis the background becomes ``model_post.mu`` and
    events strictly after ``nu`` excite through ``model_post.alpha``; excitation
    left over from events at or before ``nu`` keeps the pre-change influence.
    Identical models therefore give exactly zero.
    """
    if not model_pre.compatible_with(model_post):
        raise ValueError("pre- and post-change models must share kernel and topology")
    _check_log(model_pre, log)
    if not 0 <= nu <= t <= log.horizon:
        raise ValueError(f"need 0 <= nu <= t <= horizon, got {nu}, {t}")
    if t == nu:
        return 0.0
    lam0, nodes, comp0 = _window_terms(model_pre, log, nu, t, history=True)
    lo = np.searchsorted(log.times, nu, side="right")
    hi = np.searchsorted(log.times, t, side="right")
    times, win_nodes = log.times[lo:hi], log.nodes[lo:hi]
    d = model_pre.node_count
    acc_post = accumulators_at_events(times, win_nodes, d, model_pre.beta)
    d_mu = model_post.mu - model_pre.mu
    d_alpha = model_post.alpha - model_pre.alpha
    lam1 = lam0 + d_mu[win_nodes] + np.einsum("kj,kj->k", d_alpha[win_nodes], acc_post)
    w_post = compensator_weights(times, win_nodes, d, model_pre.beta, nu, t)
    d_comp = d_mu.sum() * (t - nu) + d_alpha.sum(axis=0) @ w_post
    if np.any(lam0 <= 0):
        bad = int(nodes[np.argmax(lam0 <= 0)])
        raise DegenerateModelError(
            f"pre-change intensity is zero at an observed event on node {bad}")
    if np.any(lam1 <= 0):
        bad = int(nodes[np.argmax(lam1 <= 0)])
        raise DegenerateModelError(
            f"post-change intensity is zero at an observed event on node {bad}")
    return float(np.sum(np.log(lam1 / lam0)) - d_comp)


def accumulators_at_times(times: np.ndarray, nodes: np.ndarray, node_count: int,
                          beta: float, query: np.ndarray) -> np.ndarray:
    """Accumulators at each (sorted) query time, counting events at or before it."""
    query = np.asarray(query, dtype=float)
    out = np.zeros((query.size, node_count))
    acc = np.zeros(node_count)
    t_prev = 0.0
    k = 0
    n = times.size
    for q_idx, q in enumerate(query):
        while k < n and times[k] <= q:
            acc *= math.exp(-beta * (times[k] - t_prev))
            acc[nodes[k]] += beta
            t_prev = times[k]
            k += 1
        out[q_idx] = acc * math.exp(-beta * (q - t_prev))
    return out


def log_likelihood_gradient(model: HawkesModel, log: EventLog, start: float = 0.0,
                            end: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`log_likelihood` with respect to ``mu`` and ``alpha``.

    Masked entries of the alpha gradient are reported as zero.
    """
    _check_log(model, log)
    if end is None:
        end = log.horizon
    lo = np.searchsorted(log.times, start, side="right")
    hi = np.searchsorted(log.times, end, side="right")
    acc = accumulators_at_events(log.times[:hi], log.nodes[:hi], model.node_count,
                                 model.beta)[lo:]
    nodes = log.nodes[lo:hi]
    lam = model.mu[nodes] + np.einsum("kj,kj->k", model.alpha[nodes], acc)
    inv = 1.0 / lam
    d = model.node_count
    g_mu = np.bincount(nodes, weights=inv, minlength=d) - (end - start)
    g_alpha = np.zeros((d, d))
    np.add.at(g_alpha, nodes, acc * inv[:, None])
    weights = compensator_weights(log.times[:hi], log.nodes[:hi], d, model.beta, start, end)
    g_alpha -= weights[None, :]
    g_alpha[~model.topology.adjacency] = 0.0
    return g_mu, g_alpha


def rescaled_intervals(model: HawkesModel, log: EventLog) -> np.ndarray:
    """Compensator increments between consecutive events of each node.

    Under the model these are i.i.d. unit exponentials (time-rescaling
    theorem); the first interval of each node runs from time zero.
    """
    _check_log(model, log)
    d = model.node_count
    beta = model.beta
    # per-source cumulative kernel mass G_j(t) = n_j(<t) - a_j(t)/beta
    acc = accumulators_at_events(log.times, log.nodes, d, beta)
    counts = np.zeros(d)
    prior = np.zeros((len(log), d))
    k = 0
    n = len(log)
    while k < n:
        m = k
        while m < n and log.times[m] == log.times[k]:
            m += 1
        prior[k:m] = counts
        np.add.at(counts, log.nodes[k:m], 1.0)
        k = m
    mass = prior - acc / beta
    own = model.mu[log.nodes] * log.times + np.einsum("kj,kj->k", model.alpha[log.nodes], mass)
    out = []
    for i in range(d):
        lam = own[log.nodes == i]
        if lam.size:
            out.append(np.diff(lam, prepend=0.0))
    return np.concatenate(out) if out else np.empty(0)


__all__ = [
    "rescaled_intervals",
    "TRUNCATION_EPS", "DegenerateModelError", "OrderingError", "StabilityError",
    "Event", "EventLog", "Topology", "ExponentialKernel", "HawkesModel",
    "ExcitationState", "spectral_radius", "intensity_direct", "excitation_advance",
    "intensities_from_state", "accumulators_at_events", "intensities_at_events",
    "compensator_weights", "log_likelihood", "log_likelihood_ratio", "accumulators_at_times",
    "log_likelihood_gradient",
]
