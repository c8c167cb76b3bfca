"""Calibrate a CUSUM threshold and check its ARL on held-out no-change replicas.

    python scripts/calibration_check.py --preset national --target-arl 365
"""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from hawkes_cpd import CusumConfig, calibrate_threshold, make_preset, simulate
from hawkes_cpd.detect import first_crossing, replica_seeds, running_max_records


@dataclass
class Experiment:
    preset: str = "national"
    preset_seed: int = 0
    design: str = "double-mu"
    target_arl: float = 365.0
    runs: int = 200
    seed: int = 1
    validation_seed: int = 99
    jobs: int = 1


def run(cfg: Experiment) -> dict:
    scenario = make_preset(cfg.preset, cfg.preset_seed, change_design=cfg.design)
    template = CusumConfig(scenario.model_pre, scenario.model_post)
    cal = calibrate_threshold(scenario.model_pre, template, cfg.target_arl, runs=cfg.runs,
                              seed=cfg.seed, n_jobs=cfg.jobs)
    horizon = cal.horizon
    held_out = [first_crossing(*running_max_records(simulate(scenario.model_pre, horizon, s),
                                                    template), cal.threshold, horizon)
                for s in replica_seeds(cfg.validation_seed, cfg.runs)]
    return {"config": asdict(cfg), "threshold": cal.threshold,
            "replica_arl": cal.average_run_length, "held_out_arl": float(np.mean(held_out)),
            "held_out_censored": int(np.sum(np.array(held_out) >= horizon))}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, value in asdict(Experiment()).items():
        p.add_argument("--" + name.replace("_", "-"), type=type(value), default=value)
    print(json.dumps(run(Experiment(**vars(p.parse_args()))), indent=2))


if __name__ == "__main__":
    main()
