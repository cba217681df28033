"""Decoder-configuration ablation: train/evaluate a set of switch combinations.

Each named row toggles loss terms; the comparative report flags the best and
second-best value per metric.  Metrics that depend on a disabled head are
reported as null for that row.
"""

from __future__ import annotations

import copy
import json
from dataclasses import replace
from pathlib import Path

from .config import AblationSwitches, RunConfig
from .training import run_eval, run_training

ROWS: dict[str, AblationSwitches] = {
    "pred_only": AblationSwitches(enable_det=False, enable_flow=True,
                                  enable_ogm=False, enable_warped_losses=False),
    "pred_ogm": AblationSwitches(enable_det=False, enable_flow=False,
                                 enable_ogm=True, enable_warped_losses=False),
    "pred_flow_ogm": AblationSwitches(enable_det=False, enable_flow=True,
                                      enable_ogm=True, enable_warped_losses=False),
    "det_warped_veh": AblationSwitches(enable_det=True, enable_flow=True,
                                       enable_ogm=False, enable_warped_losses=True),
    "all_heads": AblationSwitches(enable_det=True, enable_flow=True,
                                  enable_ogm=True, enable_warped_losses=False),
    "full": AblationSwitches(),
}

# Metrics are ascending-better unless listed here.
_LOWER_BETTER_PREFIXES = ("mse_", "flow_epe")


def _metric_available(name: str, switches: AblationSwitches) -> bool:
    if name.startswith("warped_"):
        return (switches.enable_warped_losses and switches.enable_det
                and switches.enable_flow)
    if name == "flow_epe":
        return switches.enable_flow
    if name.startswith("mse_") or name.startswith("dyn_recall_"):
        return switches.enable_ogm
    return True


def _lower_better(name: str) -> bool:
    return any(name.startswith(p) for p in _LOWER_BETTER_PREFIXES)


def run_ablation(config: RunConfig, rows: dict[str, AblationSwitches] | None = None,
                 out_dir: str | Path | None = None,
                 dataset_dir: str | Path | None = None,
                 max_steps: int | None = None) -> dict:
    """Train and evaluate every row; returns the comparative report dict."""
    rows = dict(rows) if rows is not None else dict(ROWS)
    for name, switches in rows.items():
        switches.validate()
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    results: dict[str, dict] = {}
    for name, switches in rows.items():
        row_config = copy.deepcopy(config)
        row_config.ablation = replace(switches)
        row_config.out_dir = str(out / name)
        train = run_training(row_config, dataset_dir=dataset_dir,
                             out_dir=row_config.out_dir, max_steps=max_steps)
        report = run_eval(train.checkpoint, dataset_dir=dataset_dir, split="val",
                          out_dir=row_config.out_dir)
        horizon = {k: (v if _metric_available(k, switches) else None)
                   for k, v in report.horizon.items()}
        results[name] = {"switches": switches.__dict__.copy(), "horizon": horizon}

    metric_names = sorted({k for r in results.values() for k in r["horizon"]})
    rankings: dict[str, dict] = {}
    for metric in metric_names:
        scored = [(name, r["horizon"][metric]) for name, r in results.items()
                  if r["horizon"].get(metric) is not None]
        scored = [(n, v) for n, v in scored if v == v]  # drop NaN
        scored.sort(key=lambda kv: kv[1], reverse=not _lower_better(metric))
        rankings[metric] = {
            "best": scored[0][0] if scored else None,
            "second": scored[1][0] if len(scored) > 1 else None,
        }

    comparison = {"rows": results, "rankings": rankings}
    with open(out / "ablation.json", "w") as fh:
        json.dump(comparison, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return comparison
