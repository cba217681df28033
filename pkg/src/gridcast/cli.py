"""Command-line interface.

Subcommands: ``generate``, ``train``, ``eval``, ``ablate``, ``warp``,
``report``.  Every command accepts ``--config <file>`` (JSON, see
:class:`~gridcast.config.RunConfig`) and ``--seed`` to override the config
seed.  Exit code is 0 on success; failures print a machine-readable JSON error
record to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _load_config(args):
    from .config import RunConfig

    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def cmd_generate(args) -> int:
    from .dataset import generate_dataset

    config = _load_config(args)
    if args.out:
        config.out_dir = args.out
    seeds = _parse_seed_range(args.seeds) if args.seeds else None
    if seeds is not None:
        config.n_scenes = len(seeds)
    out = generate_dataset(config, out_dir=config.out_dir, seeds=seeds)
    print(f"dataset written to {out}")
    return 0


def cmd_train(args) -> int:
    from .training import run_training

    config = _load_config(args)
    if args.out:
        config.out_dir = args.out
    result = run_training(config, dataset_dir=args.data, out_dir=config.out_dir,
                          resume_from=args.resume, max_steps=args.max_steps)
    print(f"trained {result.steps} steps; checkpoint at {result.checkpoint}")
    print(json.dumps(result.final_report.scalars(), sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    from .reporting import render_table
    from .training import run_eval

    out = args.out or str(Path(args.checkpoint).parent / "eval")
    report = run_eval(args.checkpoint, dataset_dir=args.data, split=args.split,
                      out_dir=out)
    print(render_table(report))
    print(f"report written to {out}")
    return 0


def cmd_ablate(args) -> int:
    from .ablation import ROWS, run_ablation
    from .reporting import render_comparison

    config = _load_config(args)
    if args.out:
        config.out_dir = args.out
    rows = None
    if args.rows:
        names = args.rows.split(",")
        unknown = [n for n in names if n not in ROWS]
        if unknown:
            raise ValueError(f"unknown ablation rows {unknown}; available: {list(ROWS)}")
        rows = {n: ROWS[n] for n in names}
    comparison = run_ablation(config, rows=rows, out_dir=config.out_dir,
                              dataset_dir=args.data, max_steps=args.max_steps)
    print(render_comparison(comparison))
    return 0


def cmd_warp(args) -> int:
    from . import container
    from .grids import SceneFlowGrid
    from .warp import warp_flow_grids

    flows_scene = container.read_scene(args.flows)
    if flows_scene.channels != ["fx", "fy"]:
        raise ValueError(f"flow container must have channels ['fx', 'fy'], "
                         f"got {flows_scene.channels}")
    seed_path = Path(args.seed_grid)
    if seed_path.suffix == ".npy":
        seed_grid = np.load(seed_path)
    else:
        seed_grid = np.frombuffer(seed_path.read_bytes(), dtype="<f4").reshape(
            flows_scene.geometry.shape)
    flows = [SceneFlowGrid(fx=frame[0], fy=frame[1], geometry=flows_scene.geometry)
             for frame in flows_scene.data]
    warped = warp_flow_grids(seed_grid, flows, source="veh", mode=args.mode)
    container.write_scene(args.out, flows_scene.geometry, ["warped"],
                          flows_scene.timestep, flows_scene.times,
                          flows_scene.poses, [g[None] for g in warped.grids])
    print(f"warped {len(flows)} steps into {args.out}")
    return 0


def cmd_report(args) -> int:
    from .metrics import MetricReport
    from .reporting import render_table, write_report

    with open(Path(args.eval_dir) / "report.json") as fh:
        data = json.load(fh)
    report = MetricReport(
        per_step={k: np.asarray(v) for k, v in data["per_step"].items()},
        defined=dict(data["defined"]), num_samples=data["num_samples"]).finalize()
    out = args.out or args.eval_dir
    write_report(report, out)
    print(render_table(report))
    print(f"curves and tables written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridcast",
                                     description="BEV grid forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    common(p)
    p.add_argument("--seeds", help="scene seed range 'a..b' or comma list")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", help="dataset directory (default: in-memory scenes)")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--max-steps", type=int, help="cap optimizer steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset directory (default: in-memory scenes)")
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--out", help="report output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the decoder-configuration study")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--rows", help="comma list of row names (default: all)")
    p.add_argument("--max-steps", type=int, help="cap optimizer steps per row")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("warp", help="offline flow warping of a seed grid")
    common(p)
    p.add_argument("--seed-grid", required=True, help=".npy or raw float32 grid")
    p.add_argument("--flows", required=True, help="flow container directory")
    p.add_argument("--mode", default="bilinear", choices=["bilinear", "nearest"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("report", help="re-render tables and curves from an eval")
    common(p)
    p.add_argument("--eval-dir", required=True, help="directory with report.json")
    p.add_argument("--out", help="output directory (default: eval dir)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
