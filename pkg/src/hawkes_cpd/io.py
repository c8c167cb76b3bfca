"""File formats: event files, topology/model/threshold/alarm JSON, trace CSV, DOT graphs."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from pathlib import Path

import numpy as np

from .core import EventLog, ExponentialKernel, HawkesModel, Topology

ORIENTATION = ("alpha[i][j] is the influence of source node j on receiver node i "
               "(row = receiver, column = source)")
MODEL_FORMAT = "hawkes-cpd/model"


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class LabelError(ParseError):
    pass


def _num(x: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(x))


def parse_timestamp(text: str, origin: dt.date | None, line: int | None = None) -> float:
    """Day offset for a real number, an ISO date (placed at midday) or an ISO datetime."""
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        pass
    else:
        if not math.isfinite(value):
            raise ParseError(f"non-finite timestamp {text!r}", line)
        return value
    if origin is None:
        raise ParseError(f"calendar timestamp {text!r} needs an origin date", line)
    try:
        if len(text) == 10:
            day = dt.date.fromisoformat(text)
            return float((day - origin).days) + 0.5
        stamp = dt.datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(f"unparseable timestamp {text!r}", line) from None
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(dt.timezone.utc).replace(tzinfo=None)
    base = dt.datetime.combine(origin, dt.time())
    return (stamp - base).total_seconds() / 86400.0


def parse_origin(origin) -> dt.date | None:
    if origin is None or isinstance(origin, dt.date):
        return origin
    return dt.date.fromisoformat(str(origin))


def _records(path: Path):
    """Yield ``(line_number, timestamp, location)`` from CSV or JSON-lines input."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    first = next((i for i, ln in enumerate(lines) if ln.strip()), None)
    if first is None:
        return
    if lines[first].lstrip().startswith("{"):
        for i, ln in enumerate(lines[first:], start=first + 1):
            if not ln.strip():
                continue
            try:
                rec = json.loads(ln)
                yield i, str(rec["timestamp"]), str(rec["location"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"malformed record ({exc})", i) from None
        return
    reader = csv.reader(lines[first:])
    header = [h.strip() for h in next(reader)]
    try:
        t_col, loc_col = header.index("timestamp"), header.index("location")
    except ValueError:
        raise ParseError("header must contain 'timestamp' and 'location'", first + 1) from None
    for offset, row in enumerate(reader):
        line = first + 2 + offset
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        yield line, row[t_col], row[loc_col].strip()


def ingest_events(path, topology: Topology, origin=None, horizon: float | None = None) -> EventLog:
    """Read an event file and resolve locations against ``topology``.

    Output is sorted stably by time. The horizon defaults to the last event
    time rounded up to a whole day.
    """
    origin = parse_origin(origin)
    index = topology.index()
    times, nodes = [], []
    for line, stamp, location in _records(Path(path)):
        t = parse_timestamp(stamp, origin, line)
        if t < 0:
            raise ParseError(f"timestamp {stamp!r} precedes the stream origin", line)
        try:
            nodes.append(index[location])
        except KeyError:
            raise LabelError(f"unknown location {location!r}", line) from None
        times.append(t)
    times = np.array(times, dtype=float)
    nodes = np.array(nodes, dtype=np.int64)
    order = np.argsort(times, kind="stable")
    times, nodes = times[order], nodes[order]
    if horizon is None:
        horizon = float(math.ceil(times[-1])) if times.size else 0.0
    return EventLog(times, nodes, horizon, topology.node_count)


def read_event_labels(path, origin=None) -> tuple[np.ndarray, list[str]]:
    """Times and raw location labels, without a topology (used for summaries)."""
    origin = parse_origin(origin)
    times, labels = [], []
    for line, stamp, location in _records(Path(path)):
        times.append(parse_timestamp(stamp, origin, line))
        labels.append(location)
    return np.array(times, dtype=float), labels


def write_events(path, log: EventLog, topology: Topology):
    labels = topology.node_labels
    with open(path, "w", newline="") as fh:
        fh.write("timestamp,location\n")
        for t, n in zip(log.times, log.nodes):
            fh.write(f"{_num(t)},{labels[n]}\n")


# -- topology and model ------------------------------------------------------------

def topology_to_dict(topology: Topology) -> dict:
    labels = topology.node_labels
    adj = topology.adjacency
    edges = [[labels[i], labels[j]] for i in range(len(labels))
             for j in range(i + 1, len(labels)) if adj[i, j]]
    return {"node_labels": list(labels), "edges": edges}


def topology_from_dict(data: dict) -> Topology:
    labels = [str(s) for s in data["node_labels"]]
    d = len(labels)
    if "adjacency" in data:
        adj = np.array(data["adjacency"], dtype=bool)
    else:
        index = {s: i for i, s in enumerate(labels)}
        adj = np.eye(d, dtype=bool)
        for a, b in data.get("edges", []):
            try:
                i, j = index[str(a)], index[str(b)]
            except KeyError as exc:
                raise LabelError(f"edge refers to unknown node {exc.args[0]!r}") from None
            adj[i, j] = adj[j, i] = True
    return Topology(tuple(labels), adj)


def _dump(path, data: dict):
    Path(path).write_text(json.dumps(data, indent=2, allow_nan=False) + "\n")


def _load(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None


def save_topology(path, topology: Topology):
    _dump(path, topology_to_dict(topology))


def load_topology(path) -> Topology:
    return topology_from_dict(_load(path))


def model_to_dict(model: HawkesModel, extra: dict | None = None) -> dict:
    labels = model.topology.node_labels
    data = {
        "format": MODEL_FORMAT,
        "orientation": ORIENTATION,
        "time_unit": "days",
        "beta": float(model.beta),
        "node_labels": list(labels),
        "mu": {label: float(v) for label, v in zip(labels, model.mu)},
        "alpha": [[float(v) for v in row] for row in model.alpha],
        "topology": topology_to_dict(model.topology),
    }
    if extra:
        data.update(extra)
    return data


def model_from_dict(data: dict) -> HawkesModel:
    if data.get("format") != MODEL_FORMAT:
        raise ParseError(f"not a model file (format={data.get('format')!r})")
    topology = topology_from_dict(data["topology"])
    labels = list(topology.node_labels)
    if list(data["node_labels"]) != labels:
        raise ParseError("node_labels disagree with the embedded topology")
    mu_map = data["mu"]
    mu = np.array([mu_map[label] for label in labels], dtype=float)
    return HawkesModel(mu, np.array(data["alpha"], dtype=float),
                       ExponentialKernel(float(data["beta"])), topology)


def save_model(path, model: HawkesModel, extra: dict | None = None):
    _dump(path, model_to_dict(model, extra))


def load_model(path) -> HawkesModel:
    return model_from_dict(_load(path))


def save_json(path, data: dict):
    _dump(path, data)


def load_json(path) -> dict:
    return _load(path)


# -- traces, counts, graphs ------------------------------------------------------------

def write_trace(path, times: np.ndarray, values: np.ndarray):
    with open(path, "w", newline="") as fh:
        fh.write("time,statistic\n")
        for t, v in zip(times, values):
            fh.write(f"{_num(t)},{_num(v)}\n")


def read_trace(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def weekly_counts(times: np.ndarray, labels: list[str],
                  all_labels: list[str] | None = None) -> list[tuple[int, str, int]]:
    """``(week, label, count)`` for every week up to the last event and every label."""
    if all_labels is None:
        all_labels = sorted(set(labels))
    index = {s: i for i, s in enumerate(all_labels)}
    if not len(times):
        return []
    weeks = np.floor(np.asarray(times) / 7.0).astype(int)
    n_weeks = int(weeks.max()) + 1
    counts = np.zeros((n_weeks, len(all_labels)), dtype=int)
    for w, label in zip(weeks, labels):
        if label not in index:
            raise LabelError(f"unknown location {label!r}")
        counts[w, index[label]] += 1
    return [(w, label, int(counts[w, i])) for w in range(n_weeks)
            for i, label in enumerate(all_labels)]


def write_weekly_counts(path, rows, origin: dt.date | None = None):
    with open(path, "w", newline="") as fh:
        fh.write("week,week_start,location,count\n")
        for w, label, c in rows:
            start = 7 * w
            start_txt = (origin + dt.timedelta(days=start)).isoformat() if origin else str(start)
            fh.write(f"{w},{start_txt},{label},{c}\n")


def model_to_dot(model: HawkesModel, name: str = "hawkes", min_alpha: float = 0.0) -> str:
    """Directed influence graph: node width grows with background rate, edge
    pen width with influence (source -> receiver). Exact values ride along as
    ``mu``/``alpha`` attributes."""
    labels = model.topology.node_labels
    mu_max = float(model.mu.max()) or 1.0
    off = model.alpha.copy()
    np.fill_diagonal(off, 0.0)
    a_max = float(off.max()) or 1.0
    lines = [f'digraph "{name}" {{', '  node [shape=circle, fixedsize=true];']
    for i, label in enumerate(labels):
        width = 0.2 + 1.3 * model.mu[i] / mu_max
        lines.append(f'  "{label}" [width={width:.4f}, mu={_num(model.mu[i])}, '
                     f'self_alpha={_num(model.alpha[i, i])}];')
    d = len(labels)
    for j in range(d):
        for i in range(d):
            a = off[i, j]
            if a > min_alpha and a > 0:
                pen = 0.2 + 4.8 * a / a_max
                lines.append(f'  "{labels[j]}" -> "{labels[i]}" [penwidth={pen:.4f}, '
                             f'alpha={_num(a)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ORIENTATION", "ParseError", "LabelError", "parse_timestamp", "parse_origin", "ingest_events",
    "read_event_labels", "write_events", "save_topology", "load_topology", "topology_to_dict",
    "topology_from_dict", "model_to_dict", "model_from_dict", "save_model", "load_model",
    "save_json", "load_json", "write_trace", "read_trace", "weekly_counts",
    "write_weekly_counts", "model_to_dot",
]
