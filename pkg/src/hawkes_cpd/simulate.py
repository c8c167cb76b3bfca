"""Synthetic event streams: Ogata thinning, change injection, scenario presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.spatial import Delaunay

from .core import (EventLog, ExponentialKernel, HawkesModel, Topology,
                   accumulators_at_times)

CHANGE_DESIGNS = ("double-mu", "halve-mu", "vanishing-edges")

_CHUNK = 1 << 16


@njit(cache=True)
def _thin(mu, alpha, alpha_old, beta, acc, acc_old, t, horizon, uniforms, pos,
          out_times, out_nodes, n_out):
    """Advance the thinning sampler until the horizon, the buffer or the uniforms run out.

    ``acc`` holds excitation that acts through ``alpha``; ``acc_old`` holds
    left-over excitation acting through ``alpha_old`` and receives no new
    events. Both are updated in place and refer to time ``t``.
    Returns ``(t, pos, n_out, done)``.
    """
    d = mu.shape[0]
    mu_total = mu.sum()
    colsum = alpha.sum(axis=0)
    colsum_old = alpha_old.sum(axis=0)
    n_uni = uniforms.shape[0]
    while True:
        if n_out >= out_times.shape[0] or pos + 2 > n_uni:
            return t, pos, n_out, False
        # total intensity only decays until the next event
        bound = mu_total
        for j in range(d):
            bound += colsum[j] * acc[j] + colsum_old[j] * acc_old[j]
        if bound <= 0.0:
            return horizon, pos, n_out, True
        wait = -math.log(1.0 - uniforms[pos]) / bound
        pos += 1
        if t + wait > horizon:
            return horizon, pos, n_out, True
        decay = math.exp(-beta * wait)
        for j in range(d):
            acc[j] *= decay
            acc_old[j] *= decay
        t += wait
        total = mu_total
        for j in range(d):
            total += colsum[j] * acc[j] + colsum_old[j] * acc_old[j]
        v = uniforms[pos] * bound
        pos += 1
        if v >= total:
            continue
        # accepted: v is uniform on [0, total), reuse it to pick the node
        cum = 0.0
        node = d - 1
        for i in range(d):
            lam = mu[i]
            for j in range(d):
                lam += alpha[i, j] * acc[j] + alpha_old[i, j] * acc_old[j]
            cum += lam
            if v < cum:
                node = i
                break
        out_times[n_out] = t
        out_nodes[n_out] = node
        n_out += 1
        acc[node] += beta


class _Sampler:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.uniforms = self.rng.random(_CHUNK)
        self.pos = 0

    def run(self, model: HawkesModel, start: float, end: float,
            carry: tuple[np.ndarray, np.ndarray] | None = None):
        """Events of ``model`` on ``(start, end]`` started from zero excitation.

        ``carry = (alpha_old, acc_old)`` adds decaying left-over excitation.
        """
        d = model.node_count
        acc = np.zeros(d)
        if carry is None:
            alpha_old, acc_old = np.zeros((d, d)), np.zeros(d)
        else:
            alpha_old = np.ascontiguousarray(carry[0], dtype=float)
            acc_old = carry[1].astype(float).copy()
        t = float(start)
        chunks_t, chunks_n = [], []
        buf_t = np.empty(_CHUNK)
        buf_n = np.empty(_CHUNK, dtype=np.int64)
        mu = np.ascontiguousarray(model.mu)
        alpha = np.ascontiguousarray(model.alpha)
        while True:
            t, self.pos, n_out, done = _thin(mu, alpha, alpha_old, model.beta, acc, acc_old,
                                             t, float(end), self.uniforms, self.pos,
                                             buf_t, buf_n, 0)
            chunks_t.append(buf_t[:n_out].copy())
            chunks_n.append(buf_n[:n_out].copy())
            if done:
                break
            if self.pos + 2 > self.uniforms.size:
                rest = self.uniforms[self.pos:]
                self.uniforms = np.concatenate([rest, self.rng.random(_CHUNK)])
                self.pos = 0
        return np.concatenate(chunks_t), np.concatenate(chunks_n)


def simulate(model: HawkesModel, horizon: float, seed: int) -> EventLog:
    """Draw an event stream on ``[0, horizon]`` by multivariate Ogata thinning."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    model.check_stable()
    if horizon == 0:
        return EventLog(np.empty(0), np.empty(0, dtype=np.int64), 0.0, model.node_count)
    times, nodes = _Sampler(seed).run(model, 0.0, horizon)
    return EventLog(times, nodes, horizon, model.node_count)


@dataclass(frozen=True)
class ChangeScenario:
    model_pre: HawkesModel
    model_post: HawkesModel
    change_time: float | None
    horizon: float

    def __post_init__(self):
        if not self.model_pre.compatible_with(self.model_post):
            raise ValueError("pre- and post-change models must share kernel and topology")
        if self.change_time is not None:
            if self.change_time < 0:
                raise ValueError("change_time must be >= 0")
            if self.change_time >= self.horizon:
                raise ValueError("change_time must lie before the horizon")

    @property
    def topology(self) -> Topology:
        return self.model_pre.topology


def simulate_with_change(scenario: ChangeScenario, seed: int, carryover: bool = True) -> EventLog:
    """Pre-change dynamics up to the change time, then post-change dynamics.

    After the change the background is ``model_post.mu`` and new events excite
    through ``model_post.alpha``. With ``carryover`` (default) excitation left
    by pre-change events keeps decaying through ``model_pre.alpha``; without it
    pre-change events stop influencing the process at the change time.
    """
    if scenario.change_time is None:
        return simulate(scenario.model_pre, scenario.horizon, seed)
    scenario.model_pre.check_stable()
    scenario.model_post.check_stable()
    kappa = scenario.change_time
    d = scenario.model_pre.node_count
    beta = scenario.model_pre.beta
    sampler = _Sampler(seed)
    parts_t, parts_n = [], []
    carry = None
    if kappa > 0:
        t0, n0 = sampler.run(scenario.model_pre, 0.0, kappa)
        parts_t.append(t0)
        parts_n.append(n0)
        if carryover:
            acc = accumulators_at_times(t0, n0, d, beta, np.array([kappa]))[0]
            carry = (scenario.model_pre.alpha, acc)
    t1, n1 = sampler.run(scenario.model_post, kappa, scenario.horizon, carry=carry)
    parts_t.append(t1)
    parts_n.append(n1)
    return EventLog(np.concatenate(parts_t), np.concatenate(parts_n), scenario.horizon, d)


# -- presets -------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    node_count: int
    target_rate: float
    change_design: str = "double-mu"
    beta: float = 0.2
    branching_ratio: float = 0.5
    change_time: float = 365.0
    horizon: float = 730.0
    label_prefix: str = "n"
    vanishing_nodes: int = 4

    def __post_init__(self):
        if self.change_design not in CHANGE_DESIGNS:
            raise ValueError(f"unknown change design {self.change_design!r}; "
                             f"expected one of {CHANGE_DESIGNS}")
        if not 0 <= self.branching_ratio < 1:
            raise ValueError("branching_ratio must lie in [0, 1)")


PRESETS = {
    # 50 states plus DC, ~40 orders/day
    "national": ScenarioPreset("national", 51, 40.0, label_prefix="S"),
    # 54 California counties, ~3.5 orders/day
    "county": ScenarioPreset("county", 54, 3.5, label_prefix="C"),
}


def get_preset(name: str, **overrides) -> ScenarioPreset:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return replace(preset, **overrides) if overrides else preset


def random_planar_topology(node_count: int, rng: np.random.Generator,
                           prefix: str = "n") -> Topology:
    """Delaunay triangulation of uniform points in the unit square."""
    labels = tuple(f"{prefix}{i:02d}" for i in range(node_count))
    adj = np.eye(node_count, dtype=bool)
    if node_count == 2:
        adj[:] = True
    elif node_count > 2:
        points = rng.random((node_count, 2))
        for simplex in Delaunay(points).simplices:
            for a in simplex:
                for b in simplex:
                    adj[a, b] = True
    return Topology(labels, adj)


def apply_change_design(model: HawkesModel, design: str, vanishing_nodes: int = 4) -> HawkesModel:
    """Post-change model for one of the shipped designs."""
    if design == "double-mu":
        return model.replace(mu=2.0 * model.mu)
    if design == "halve-mu":
        return model.replace(mu=0.5 * model.mu)
    if design == "vanishing-edges":
        rates = model.stationary_rates()
        # stable sort on -rate: ties resolved toward the lower index
        chosen = np.argsort(-rates, kind="stable")[:vanishing_nodes]
        alpha = model.alpha.copy()
        for j in chosen:
            keep = alpha[j, j]
            alpha[:, j] = 0.0
            alpha[j, j] = keep
        return model.replace(alpha=alpha)
    raise ValueError(f"unknown change design {design!r}; expected one of {CHANGE_DESIGNS}")


def preset_model(preset: ScenarioPreset, seed: int) -> HawkesModel:
    rng = np.random.default_rng(seed)
    d = preset.node_count
    topology = random_planar_topology(d, rng, preset.label_prefix)
    size = rng.lognormal(0.0, 1.0, d)
    alpha = rng.uniform(0.5, 1.5, (d, d)) * np.sqrt(size / size.mean())[None, :]
    alpha[~topology.adjacency] = 0.0
    if preset.branching_ratio > 0:
        alpha *= preset.branching_ratio / np.max(np.abs(np.linalg.eigvals(alpha)))
    else:
        alpha[:] = 0.0
    total_per_unit = np.linalg.solve(np.eye(d) - alpha, size).sum()
    mu = size * (preset.target_rate / total_per_unit)
    return HawkesModel(mu, alpha, ExponentialKernel(preset.beta), topology)


def make_preset(preset: ScenarioPreset | str, seed: int, change_design: str | None = None,
                change_time: float | None | str = "preset",
                horizon: float | None = None) -> ChangeScenario:
    """Random network scenario calibrated to the preset's expected event rate.

    ``change_time=None`` produces a no-change scenario; the default keeps the
    preset's own change time.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    if change_design is not None:
        preset = replace(preset, change_design=change_design)
    model_pre = preset_model(preset, seed)
    model_post = apply_change_design(model_pre, preset.change_design, preset.vanishing_nodes)
    kappa = preset.change_time if change_time == "preset" else change_time
    return ChangeScenario(model_pre, model_post, kappa,
                          preset.horizon if horizon is None else float(horizon))


__all__ = [
    "CHANGE_DESIGNS", "PRESETS", "ChangeScenario", "ScenarioPreset", "simulate",
    "simulate_with_change", "get_preset", "make_preset", "preset_model",
    "apply_change_design", "random_planar_topology",
]
