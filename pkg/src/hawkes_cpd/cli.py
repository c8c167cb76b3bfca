"""Command-line pipeline: simulate -> fit -> calibrate -> detect -> export."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import io
from .core import EventLog, HawkesModel
from .detect import (CusumConfig, GlrConfig, calibrate_threshold, cusum_run, glr_run)
from .fit import FitConfig, profile_beta
from .simulate import (CHANGE_DESIGNS, PRESETS, apply_change_design, make_preset,
                       simulate_with_change)


class UsageError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _post_model(model: HawkesModel, design: str | None, post_model: str | None) -> HawkesModel:
    if post_model:
        post = io.load_model(post_model)
        if not model.compatible_with(post):
            raise UsageError("post-change model must share beta and topology with the model")
        return post
    if design is None:
        raise UsageError("CUSUM needs --design or --post-model")
    return apply_change_design(model, design)


def _detector_config(args, model: HawkesModel, threshold: float = math.inf):
    if args.detector == "cusum":
        return CusumConfig(model, _post_model(model, args.design, args.post_model),
                           threshold=threshold, eval_grid_step=args.grid_step)
    return GlrConfig(model, window=args.window, threshold=threshold,
                     eval_grid_step=args.grid_step)


# -- subcommands ---------------------------------------------------------------------

def cmd_simulate(args):
    change = None if args.change == "none" else args.change
    scenario = make_preset(args.preset, args.network_seed, change_design=change,
                           change_time=None if change is None else args.change_day,
                           horizon=args.horizon)
    log = simulate_with_change(scenario, args.seed)
    io.write_events(args.out, log, scenario.topology)
    topo_out = args.topology_out or str(Path(args.out).with_suffix(".topology.json"))
    io.save_topology(topo_out, scenario.topology)
    if args.truth_out:
        io.save_json(args.truth_out, {
            "preset": args.preset, "change": args.change,
            "change_day": None if change is None else args.change_day,
            "horizon": args.horizon, "network_seed": args.network_seed, "seed": args.seed,
            "model_pre": io.model_to_dict(scenario.model_pre),
            "model_post": io.model_to_dict(scenario.model_post),
        })
    print(f"wrote {len(log)} events on {log.node_count} nodes to {args.out}")


def cmd_fit(args):
    topology = io.load_topology(args.topology)
    log = io.ingest_events(args.events, topology, origin=args.origin)
    end = args.train_end if args.train_end is not None else log.horizon
    train = log.restrict(end)
    # restrict() keeps events at exactly `end`; training uses data before it
    keep = train.times < end
    train = EventLog(train.times[keep], train.nodes[keep], end, train.node_count)
    config = FitConfig(max_iterations=args.max_iterations, tolerance=args.tolerance)
    beta, report = profile_beta(train, topology, args.beta_grid, config)
    io.save_model(args.out, report.model, extra={"fit": {
        "beta_grid": list(args.beta_grid),
        "train_end": end,
        "events": len(train),
        "log_likelihood": report.final_log_likelihood,
        "iterations": report.iterations,
        "converged": report.converged,
        "branching_ratio": report.model.branching_ratio(),
    }})
    print(f"beta={beta!r} loglik={report.final_log_likelihood!r} "
          f"iterations={report.iterations} converged={report.converged}")


def cmd_calibrate(args):
    model = io.load_model(args.model)
    config = _detector_config(args, model)
    cal = calibrate_threshold(model, config, args.target_arl, runs=args.runs,
                              horizon=args.horizon, seed=args.seed, n_jobs=args.jobs)
    io.save_json(args.out, {
        "threshold": cal.threshold,
        "detector": args.detector,
        "design": args.design if args.detector == "cusum" else None,
        "window": args.window if args.detector == "glr" else None,
        "grid_step": args.grid_step,
        "target_arl": cal.target_arl,
        "empirical_arl": cal.average_run_length,
        "runs": cal.runs,
        "horizon": cal.horizon,
        "seed": cal.seed,
    })
    print(f"threshold={cal.threshold!r} arl={cal.average_run_length!r}")


def _threshold(args) -> float:
    if (args.threshold is None) == (args.threshold_file is None):
        raise UsageError("give exactly one of --threshold and --threshold-file")
    if args.threshold is not None:
        return args.threshold
    return float(io.load_json(args.threshold_file)["threshold"])


def cmd_detect(args):
    model = io.load_model(args.model)
    log = io.ingest_events(args.events, model.topology, origin=args.origin, horizon=args.horizon)
    threshold = _threshold(args)
    config = _detector_config(args, model, threshold)
    trace = cusum_run(log, config) if args.detector == "cusum" else glr_run(log, config)
    io.write_trace(args.trace, trace.times, trace.values)
    alarm = trace.alarm
    record = {
        "alarm": alarm is not None,
        "time": None if alarm is None else alarm.time,
        "statistic": None if alarm is None else alarm.statistic,
        "detector": args.detector,
        "threshold": threshold,
        "horizon": log.horizon,
    }
    if alarm is not None and alarm.model is not None:
        record["post_change_model"] = io.model_to_dict(alarm.model)
    if args.alarm:
        io.save_json(args.alarm, record)
    if alarm is not None and alarm.model is not None and args.post_model_out:
        io.save_model(args.post_model_out, alarm.model)
    print("no alarm" if alarm is None else f"alarm at t={alarm.time!r}")


def cmd_export_graph(args):
    model = io.load_model(args.model)
    Path(args.out).write_text(io.model_to_dot(model, min_alpha=args.min_alpha))


def cmd_summarize(args):
    if not args.weekly:
        raise UsageError("only --weekly summaries are supported")
    origin = io.parse_origin(args.origin)
    times, labels = io.read_event_labels(args.events, origin)
    all_labels = None
    if args.topology:
        all_labels = list(io.load_topology(args.topology).node_labels)
    io.write_weekly_counts(args.out, io.weekly_counts(times, labels, all_labels), origin)


def cmd_run(args):
    """Execute a declarative run file (JSON)."""
    cfg = io.load_json(args.config)
    base = Path(args.config).parent
    detectors = [k for k in ("cusum", "glr") if k in cfg]
    if len(detectors) != 1:
        raise UsageError("run config needs exactly one of 'cusum' or 'glr'")
    kind = detectors[0]
    section = cfg[kind]
    paths = {k: base / cfg[k] for k in ("events", "model") if k in cfg}
    for key in ("events", "model"):
        if key not in paths:
            raise UsageError(f"run config is missing {key!r}")
        if not paths[key].exists():
            raise FileNotFoundError(f"{key} file {paths[key]} does not exist")
    ns = argparse.Namespace(
        detector=kind,
        design=section.get("design"),
        post_model=str(base / section["post_model"]) if section.get("post_model") else None,
        window=float(section.get("window", 100.0)),
        grid_step=float(cfg.get("grid_step", 1.0)),
    )
    model = io.load_model(paths["model"])
    if "threshold" in cfg:
        threshold = float(cfg["threshold"])
    elif "calibration" in cfg:
        c = cfg["calibration"]
        probe = _detector_config(ns, model)
        threshold = calibrate_threshold(model, probe, float(c["target_arl"]),
                                        runs=int(c.get("runs", 200)),
                                        horizon=c.get("horizon"),
                                        seed=int(cfg.get("seed", 0))).threshold
    else:
        raise UsageError("run config needs 'threshold' or a 'calibration' block")
    detect_ns = argparse.Namespace(
        **vars(ns), events=str(paths["events"]), model=str(paths["model"]),
        origin=cfg.get("origin"), horizon=cfg.get("horizon"), threshold=threshold,
        threshold_file=None,
        trace=str(base / cfg.get("trace", "trace.csv")),
        alarm=str(base / cfg.get("alarm", "alarm.json")),
        post_model_out=None)
    cmd_detect(detect_ns)


# -- parser --------------------------------------------------------------------------

def _add_detector_args(p):
    p.add_argument("--detector", choices=("cusum", "glr"), required=True)
    p.add_argument("--design", choices=CHANGE_DESIGNS,
                   help="designed post-change model for CUSUM")
    p.add_argument("--post-model", help="explicit post-change model file for CUSUM")
    p.add_argument("--window", type=float, default=100.0, help="GLR window in days")
    p.add_argument("--grid-step", type=float, default=1.0, help="evaluation grid in days")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": f"{self.prog}: {message}"}),
              file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hawkes-cpd",
                     description="Hawkes-network change-point detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthetic event stream from a preset")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--change", choices=CHANGE_DESIGNS + ("none",), default="double-mu")
    p.add_argument("--change-day", type=float, default=365.0)
    p.add_argument("--horizon", type=float, default=730.0)
    p.add_argument("--seed", type=int, default=0, help="event stream seed")
    p.add_argument("--network-seed", type=int, default=0, help="preset network seed")
    p.add_argument("--out", required=True)
    p.add_argument("--topology-out")
    p.add_argument("--truth-out", help="write the generating models here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="pre-change MLE with beta profiling")
    p.add_argument("--events", required=True)
    p.add_argument("--topology", required=True)
    p.add_argument("--beta-grid", type=_floats, default=[0.2])
    p.add_argument("--train-end", type=float)
    p.add_argument("--origin", help="ISO date that is day 0 for calendar timestamps")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="Monte Carlo threshold for a target ARL")
    p.add_argument("--model", required=True)
    _add_detector_args(p)
    p.add_argument("--target-arl", type=float, required=True)
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--horizon", type=float, help="days per replica (default 2x target)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="run CUSUM or GLR over an event file")
    p.add_argument("--events", required=True)
    p.add_argument("--model", required=True)
    _add_detector_args(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--threshold-file")
    p.add_argument("--origin")
    p.add_argument("--horizon", type=float, help="observation end (default: last event day)")
    p.add_argument("--trace", required=True)
    p.add_argument("--alarm")
    p.add_argument("--post-model-out", help="GLR: write the fitted post-change model")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("export-graph", help="DOT influence graph of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--min-alpha", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("summarize", help="per-node weekly event counts")
    p.add_argument("--events", required=True)
    p.add_argument("--weekly", action="store_true")
    p.add_argument("--topology")
    p.add_argument("--origin")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("run", help="execute a JSON run configuration")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - one machine-readable line per failure
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
