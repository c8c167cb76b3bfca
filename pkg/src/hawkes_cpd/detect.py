"""Online change-point detection: recursive CUSUM, window-limited GLR, ARL calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from numba import njit

from .core import DegenerateModelError, EventLog, ExcitationState, HawkesModel
from .fit import FitConfig, carryover_window, fit_prepared, window_log_likelihood


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CusumConfig:
    model_pre: HawkesModel
    model_post: HawkesModel
    threshold: float = math.inf
    eval_grid_step: float = 1.0

    def __post_init__(self):
        if not self.model_pre.compatible_with(self.model_post):
            raise ValueError("pre- and post-change models must share kernel and topology")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not self.eval_grid_step > 0:
            raise ValueError("eval_grid_step must be positive")


@dataclass(frozen=True)
class GlrConfig:
    model_pre: HawkesModel
    window: float = 100.0
    threshold: float = math.inf
    eval_grid_step: float = 1.0
    inner_fit: FitConfig = FitConfig(max_iterations=300, tolerance=1e-7)

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("window must be positive")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not self.eval_grid_step > 0:
            raise ValueError("eval_grid_step must be positive")


DetectorConfig = Union[CusumConfig, GlrConfig]


@dataclass
class Alarm:
    time: float
    statistic: float
    model: HawkesModel | None = None   # fitted post-change model (GLR only)


@dataclass
class DetectorState:
    statistic: float
    restart_time: float
    excitation_pre: ExcitationState
    excitation_post: ExcitationState
    alarm: Alarm | None = None

    @property
    def time(self) -> float:
        return self.excitation_pre.last_update


@dataclass
class StatisticTrace:
    times: np.ndarray
    values: np.ndarray
    alarm: Alarm | None = None

    @property
    def alarm_time(self) -> float | None:
        return None if self.alarm is None else self.alarm.time

    def __len__(self):
        return self.times.size


def _grid(step: float, after: float, until: float) -> np.ndarray:
    """Multiples of ``step`` in ``(after, until]``."""
    first = math.floor(after / step + 1e-12) + 1
    last = math.floor(until / step + 1e-12)
    return np.arange(first, last + 1, dtype=float) * step


def _check_chunk(seen_until: float, times: np.ndarray, until: float):
    if until < seen_until:
        raise ValueError(f"cannot advance to {until}; already at {seen_until}")
    if times.size:
        if np.any(np.diff(times) < 0):
            raise ValueError("events must be time-ordered")
        # events at `seen_until` were part of the previous chunk
        if (times[0] <= seen_until and seen_until > 0) or times[0] < 0 or times[-1] > until:
            raise ValueError(f"events must lie in ({seen_until}, {until}]")


# -- CUSUM -------------------------------------------------------------------------

@njit(cache=True)
def _cusum_scan(times, nodes, grid, mu0, alpha0, d_mu, d_alpha, beta, threshold,
                a_full, a_post, scal, grid_out, rec_t, rec_v):
    """Reflected CUSUM recursion over merged event and grid times.

    ``scal = [t_last, S, restart_time, running_max, n_records]`` and the two
    accumulator vectors are updated in place. Returns
    ``(events_used, grid_used, status, bad_node)`` with status 0 = input
    exhausted, 1 = alarm, 2 = zero intensity at an event.
    """
    d = mu0.shape[0]
    n = times.shape[0]
    ng = grid.shape[0]
    d_mu_total = d_mu.sum()
    d_colsum = d_alpha.sum(axis=0)
    t_last = scal[0]
    s = scal[1]
    i = 0
    g = 0
    while i < n or g < ng:
        next_e = times[i] if i < n else np.inf
        next_g = grid[g] if g < ng else np.inf
        tn = min(next_e, next_g)
        dt = tn - t_last
        inc = 0.0
        if dt > 0.0:
            decay = math.exp(-beta * dt)
            excit = 0.0
            for j in range(d):
                excit += d_colsum[j] * a_post[j]
            inc -= d_mu_total * dt + excit * (1.0 - decay) / beta
            for j in range(d):
                a_full[j] *= decay
                a_post[j] *= decay
        t_last = tn
        if next_e == tn:
            m = i
            while m < n and times[m] == tn:
                k = nodes[m]
                lam0 = mu0[k]
                dlam = d_mu[k]
                for j in range(d):
                    lam0 += alpha0[k, j] * a_full[j]
                    dlam += d_alpha[k, j] * a_post[j]
                lam1 = lam0 + dlam
                if lam0 <= 0.0 or lam1 <= 0.0:
                    scal[0] = t_last
                    scal[1] = s
                    return m, g, 2, k
                inc += math.log(lam1 / lam0)
                m += 1
            for q in range(i, m):
                a_full[nodes[q]] += beta
                a_post[nodes[q]] += beta
            i = m
        s += inc
        if s <= 0.0:
            s = 0.0
            for j in range(d):
                a_post[j] = 0.0
            scal[2] = tn
        if s > scal[3]:
            scal[3] = s
            r = int(scal[4])
            if r < rec_t.shape[0]:
                rec_t[r] = tn
                rec_v[r] = s
                scal[4] = r + 1
        alarm = s >= threshold
        if next_g == tn:
            grid_out[g] = s
            g += 1
        if alarm:
            scal[0] = t_last
            scal[1] = s
            return i, g, 1, -1
    scal[0] = t_last
    scal[1] = s
    return i, g, 0, -1


class CusumDetector:
    """Streaming CUSUM with designed post-change parameters.

    The statistic follows ``S <- max(S + increment, 0)`` at every event and grid
    time, where the increment is the exact log-likelihood-ratio contribution
    of the elapsed interval. When ``S`` reflects at zero the post-change
    excitation restarts, so ``S(t)`` equals the log-likelihood ratio of a change
    at the most recent restart time.
    """

    def __init__(self, config: CusumConfig, track_records: bool = False):
        self.config = config
        pre, post = config.model_pre, config.model_post
        d = pre.node_count
        self._mu0 = np.ascontiguousarray(pre.mu)
        self._alpha0 = np.ascontiguousarray(pre.alpha)
        self._d_mu = post.mu - pre.mu
        self._d_alpha = np.ascontiguousarray(post.alpha - pre.alpha)
        self._scal = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
        self.state = DetectorState(0.0, 0.0, ExcitationState.zeros(d), ExcitationState.zeros(d))
        self._track = track_records
        self._records_t: list[np.ndarray] = []
        self._records_v: list[np.ndarray] = []
        self._grid_done = 0.0

    def advance(self, times: np.ndarray, nodes: np.ndarray, until: float) -> StatisticTrace:
        """Consume the events in ``(previous until, until]``.

        Returns the statistic at grid times in the covered span; when an alarm is
        raised at an event time that is not a grid time, a final row at the alarm
        time is appended. After an alarm the detector ignores further input.
        """
        if self.state.alarm is not None:
            return StatisticTrace(np.empty(0), np.empty(0), self.state.alarm)
        times = np.ascontiguousarray(times, dtype=np.float64)
        nodes = np.ascontiguousarray(nodes, dtype=np.int64)
        _check_chunk(self._grid_done, times, until)
        grid = _grid(self.config.eval_grid_step, self._grid_done, until)
        grid_out = np.empty(grid.size)
        cap = times.size + grid.size if self._track else 0
        rec_t, rec_v = np.empty(cap), np.empty(cap)
        self._scal[4] = 0
        scal = self._scal
        scal[0] = self.state.time
        scal[1] = self.state.statistic
        scal[2] = self.state.restart_time
        threshold = self.config.threshold
        used_e, used_g, status, bad = _cusum_scan(
            times, nodes, grid, self._mu0, self._alpha0, self._d_mu, self._d_alpha,
            self.config.model_pre.beta, threshold,
            self.state.excitation_pre.accumulators, self.state.excitation_post.accumulators,
            scal, grid_out, rec_t, rec_v)
        self.state.statistic = float(scal[1])
        self.state.restart_time = float(scal[2])
        self.state.excitation_pre.last_update = float(scal[0])
        self.state.excitation_post.last_update = float(scal[0])
        if self._track:
            n_rec = int(scal[4])
            self._records_t.append(rec_t[:n_rec].copy())
            self._records_v.append(rec_v[:n_rec].copy())
        if status == 2:
            raise DegenerateModelError(
                f"zero intensity at an observed event on node {bad} at t={scal[0]}; "
                "the post-change design forbids events there")
        out_t, out_v = grid[:used_g], grid_out[:used_g]
        if status == 1:
            t_alarm = float(scal[0])
            self.state.alarm = Alarm(t_alarm, float(scal[1]))
            if used_g == 0 or out_t[-1] != t_alarm:
                out_t = np.append(out_t, t_alarm)
                out_v = np.append(out_v, scal[1])
            self._grid_done = t_alarm
        else:
            self._grid_done = until
        return StatisticTrace(out_t, out_v, self.state.alarm)

    def records(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and values at which the running maximum of ``S`` increased."""
        if not self._records_t:
            return np.empty(0), np.empty(0)
        return np.concatenate(self._records_t), np.concatenate(self._records_v)

    def restart(self):
        """Clear the alarm and the statistic; keep the pre-change excitation."""
        self.state.alarm = None
        self.state.statistic = 0.0
        self.state.restart_time = self.state.time
        self.state.excitation_post.accumulators[:] = 0.0
        self._scal[3] = 0.0


def cusum_run(log: EventLog, config: CusumConfig) -> StatisticTrace:
    """CUSUM statistic over a whole log, recorded on the evaluation grid."""
    if log.node_count != config.model_pre.node_count:
        raise ValueError("log and model disagree on the number of nodes")
    return CusumDetector(config).advance(log.times, log.nodes, log.horizon)


# -- GLR ---------------------------------------------------------------------------

class GlrDetector:
    """Window-limited GLR: at each grid time refit the post-change model on the
    last ``window`` days and compare with the pre-change model.

    Excitation from events before the window acts through the pre-change
    influence under both hypotheses, so the pre-change parameters are always
    feasible and the statistic is nonnegative up to EM tolerance.
    """

    def __init__(self, config: GlrConfig):
        self.config = config
        pre = config.model_pre
        d = pre.node_count
        self.state = DetectorState(0.0, 0.0, ExcitationState.zeros(d), ExcitationState.zeros(d))
        self._buf_t = np.empty(0)
        self._buf_n = np.empty(0, dtype=np.int64)
        self._trail = ExcitationState.zeros(d)
        self._grid_done = 0.0
        self._last_fit: HawkesModel | None = None

    def _warm_start(self, counts: np.ndarray):
        pre = self.config.model_pre
        mask = pre.topology.adjacency
        w = self.config.window
        floor = self.config.inner_fit.mu_floor
        if self._last_fit is None:
            return np.maximum(counts / (2.0 * w), floor), np.where(mask, 0.1, 0.0)
        # keep entries that the previous window drove to zero able to recover
        mu = np.maximum(self._last_fit.mu, np.maximum(counts / (4.0 * w), floor))
        alpha = np.where(mask, np.maximum(self._last_fit.alpha, 0.01), 0.0)
        return mu, alpha

    def _evaluate(self, t: float):
        cfg = self.config
        pre = cfg.model_pre
        beta = pre.beta
        start = t - cfg.window
        # fold events that left the window into the trailing accumulators
        leave = np.searchsorted(self._buf_t, start, side="right")
        acc = self._trail.accumulators
        t_prev = self._trail.last_update
        for tk, nk in zip(self._buf_t[:leave], self._buf_n[:leave]):
            acc *= math.exp(-beta * (tk - t_prev))
            acc[nk] += beta
            t_prev = tk
        acc *= math.exp(-beta * (start - t_prev))
        self._trail.last_update = start
        self._buf_t, self._buf_n = self._buf_t[leave:], self._buf_n[leave:]
        upto = np.searchsorted(self._buf_t, t, side="right")
        wt, wn = self._buf_t[:upto], self._buf_n[:upto]
        win = carryover_window(wt, wn, pre.node_count, beta, start, t, acc.copy(), pre.alpha)
        mu0, alpha0 = self._warm_start(np.bincount(wn, minlength=pre.node_count))
        report = fit_prepared(win, pre.topology, beta, mu0, alpha0, cfg.inner_fit)
        self._last_fit = report.model
        return report.final_log_likelihood - window_log_likelihood(win, pre), report.model

    def advance(self, times: np.ndarray, nodes: np.ndarray, until: float) -> StatisticTrace:
        if self.state.alarm is not None:
            return StatisticTrace(np.empty(0), np.empty(0), self.state.alarm)
        times = np.asarray(times, dtype=float)
        nodes = np.asarray(nodes, dtype=np.int64)
        _check_chunk(self._grid_done, times, until)
        self._buf_t = np.concatenate([self._buf_t, times])
        self._buf_n = np.concatenate([self._buf_n, nodes])
        grid = _grid(self.config.eval_grid_step, self._grid_done, until)
        grid = grid[grid >= self.config.window]
        out_t, out_v = [], []
        for t in grid:
            stat, fitted = self._evaluate(float(t))
            out_t.append(t)
            out_v.append(stat)
            self.state.statistic = stat
            if stat >= self.config.threshold:
                self.state.alarm = Alarm(float(t), stat, fitted)
                break
        self._grid_done = until if self.state.alarm is None else self.state.alarm.time
        self.state.excitation_pre.last_update = self._grid_done
        return StatisticTrace(np.array(out_t), np.array(out_v), self.state.alarm)

    @property
    def last_fit(self) -> HawkesModel | None:
        return self._last_fit


def glr_run(log: EventLog, config: GlrConfig) -> StatisticTrace:
    """GLR statistic at every grid time ``t >= window``."""
    if log.node_count != config.model_pre.node_count:
        raise ValueError("log and model disagree on the number of nodes")
    if log.horizon <= config.window:
        raise ValueError(f"log horizon {log.horizon} must exceed the window {config.window}")
    return GlrDetector(config).advance(log.times, log.nodes, log.horizon)


# -- threshold calibration ---------------------------------------------------------------

def make_detector(config: DetectorConfig, track_records: bool = False):
    if isinstance(config, CusumConfig):
        return CusumDetector(config, track_records=track_records)
    if isinstance(config, GlrConfig):
        return GlrDetector(config)
    raise TypeError(f"unsupported detector config {type(config).__name__}")


def run_detector(log: EventLog, config: DetectorConfig) -> StatisticTrace:
    if isinstance(config, CusumConfig):
        return cusum_run(log, config)
    return glr_run(log, config)


def running_max_records(log: EventLog, config: DetectorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Staircase of the running maximum statistic with no threshold."""
    config = replace(config, threshold=math.inf)
    if isinstance(config, CusumConfig):
        det = CusumDetector(config, track_records=True)
        det.advance(log.times, log.nodes, log.horizon)
        return det.records()
    trace = glr_run(log, config)
    running = np.maximum.accumulate(trace.values) if len(trace) else trace.values
    keep = np.ones(running.size, dtype=bool)
    keep[1:] = running[1:] > running[:-1]
    return trace.times[keep], running[keep]


def first_crossing(record_t: np.ndarray, record_v: np.ndarray, threshold: float,
                   horizon: float) -> float:
    """First time the statistic reaches ``threshold``, censored at ``horizon``."""
    idx = np.searchsorted(record_v, threshold, side="left")
    return float(record_t[idx]) if idx < record_v.size else float(horizon)


def average_run_length(records, threshold: float, horizon: float) -> float:
    return float(np.mean([first_crossing(t, v, threshold, horizon) for t, v in records]))


@dataclass
class Calibration:
    threshold: float
    average_run_length: float
    target_arl: float
    runs: int
    horizon: float
    seed: int
    max_statistics: np.ndarray = field(repr=False)


def replica_seeds(seed: int, runs: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(runs)]


def _replica_records(config: DetectorConfig, horizon: float, seed: int):
    from .simulate import simulate
    log = simulate(config.model_pre, horizon, seed)
    return running_max_records(log, config)


def calibrate_threshold(model_pre: HawkesModel, detector: DetectorConfig, target_arl: float,
                        runs: int = 200, horizon: float | None = None, seed: int = 0,
                        n_jobs: int = 1, min_runs: int = 50) -> Calibration:
    """Smallest threshold whose Monte Carlo ARL under no change reaches ``target_arl``.

    Each replica simulates ``model_pre`` over ``horizon`` days (default twice the
    target) and stores the running maximum of the statistic; the ARL is the
    mean first-crossing time censored at the horizon, and the threshold is found
    by bisection on those stored trajectories.
    """
    if horizon is None:
        horizon = 2.0 * target_arl
    if runs < min_runs:
        raise ValueError(f"need at least {min_runs} runs, got {runs}")
    if target_arl <= 0:
        raise ValueError("target_arl must be positive")
    if horizon < 2.0 * target_arl:
        raise ValueError(f"horizon {horizon} must be at least twice the target ARL")
    detector = replace(detector, model_pre=model_pre, threshold=math.inf)
    seeds = replica_seeds(seed, runs)
    if n_jobs == 1:
        records = [_replica_records(detector, horizon, s) for s in seeds]
    else:
        from joblib import Parallel, delayed
        records = Parallel(n_jobs=n_jobs)(
            delayed(_replica_records)(detector, horizon, s) for s in seeds)
    maxima = np.array([v[-1] if v.size else 0.0 for _, v in records])
    hi = float(maxima.max()) * (1.0 + 1e-9) + 1e-9
    best = average_run_length(records, hi, horizon)
    if best < target_arl:
        raise CalibrationError(
            f"target ARL {target_arl} unattainable; maximum attainable ARL is {best:.6g}")
    lo = 0.0
    for _ in range(200):
        if hi - lo <= 1e-10 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if average_run_length(records, mid, horizon) >= target_arl:
            hi = mid
        else:
            lo = mid
    return Calibration(hi, average_run_length(records, hi, horizon), float(target_arl), runs,
                       float(horizon), seed, maxima)


__all__ = [
    "CalibrationError", "CusumConfig", "GlrConfig", "Alarm", "DetectorState", "StatisticTrace",
    "CusumDetector", "GlrDetector", "cusum_run", "glr_run", "run_detector",
    "calibrate_threshold", "Calibration", "running_max_records", "first_crossing",
    "average_run_length", "replica_seeds", "make_detector",
]
