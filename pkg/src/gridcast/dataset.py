"""Dataset generation and loading.

A dataset directory holds one scene container per scene (script + rendered
input frames) and an index of training windows::

    out_dir/
      config.json
      train/
        index.json
        scene_00000/         # grid container (see gridcast.container)
          manifest.json
          script.json
          frames/frame_000000.bin ...
      val/ ...

Training samples are built from the scene scripts (exact, deterministic), so
windows never need to be materialized on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import container
from .config import RunConfig
from .geometry import GridGeometry, Pose, grid_frame_for
from .grids import FRAME_CHANNELS, SequenceSample, compose_input_frame
from .world import SceneScript, build_sample, generate_scene, render_frame


def scene_seeds(config: RunConfig) -> tuple[list[int], list[int]]:
    """Disjoint train/val scene seeds derived from the run seed."""
    base = config.seed * 100003
    seeds = [base + i for i in range(config.n_scenes)]
    n_train = int(round(config.n_scenes * config.train_fraction))
    return seeds[:n_train], seeds[n_train:]


def window_times(config: RunConfig) -> list[float]:
    """Sliding-window reference times valid for one scene."""
    first = config.num_history * config.step_seconds
    last = config.world.duration - config.num_future * config.step_seconds
    times = []
    t = first
    while t <= last + 1e-9:
        times.append(round(t, 6))
        t += config.window_stride
    return times


def _template_geometry(config: RunConfig) -> GridGeometry:
    cells = config.geometry.cells
    return GridGeometry(width=cells, height=cells, resolution=config.geometry.resolution,
                        origin_pose=Pose(0.0, 0.0, 0.0))


@dataclass
class SampleSet:
    """Lazily built set of training windows over a list of scenes."""

    scripts: list[SceneScript]
    windows: list[tuple[int, float]]  # (script index, reference time)
    config: RunConfig

    def __len__(self) -> int:
        return len(self.windows)

    def build(self, index: int) -> SequenceSample:
        script_idx, t = self.windows[index]
        return build_sample(
            self.scripts[script_idx], t, self.config.num_history,
            self.config.num_future, self.config.step_seconds, self.config.sensor,
            _template_geometry(self.config), self.config.v_static_thresh)

    def materialize(self) -> list[SequenceSample]:
        return [self.build(i) for i in range(len(self))]


def sample_set_for(config: RunConfig, seeds: list[int]) -> SampleSet:
    scripts = [generate_scene(seed, config.world) for seed in seeds]
    times = window_times(config)
    windows = [(i, t) for i in range(len(scripts)) for t in times]
    return SampleSet(scripts=scripts, windows=windows, config=config)


def collate(samples: list[SequenceSample]) -> dict[str, torch.Tensor]:
    """Stack samples into the training batch layout."""
    history = np.stack([np.stack([f.channels for f in s.history]) for s in samples])
    det_veh = np.stack([s.gt_detection.veh.prob for s in samples])
    det_dyn = np.stack([s.gt_detection.dyn for s in samples])
    future_veh = np.stack([[t.veh.prob for t in s.gt_future] for s in samples])
    future_flow = np.stack([[t.flow.stacked() for t in s.gt_future] for s in samples])
    future_ogm = np.stack([[t.ogm.stacked() for t in s.gt_future] for s in samples])
    to = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
    return {
        "history": to(history),
        "det_veh": to(det_veh),
        "det_dyn": to(det_dyn),
        "future_veh": to(future_veh),
        "future_flow": to(future_flow),
        "future_ogm": to(future_ogm),
    }


def write_scene_container(path: Path, script: SceneScript, config: RunConfig) -> None:
    """Render a scene's input frames into the binary grid container."""
    times = []
    t = 0.0
    while t <= script.duration + 1e-9:
        times.append(round(t, 6))
        t += config.step_seconds
    template = _template_geometry(config)
    poses, data = [], []
    for ti in times:
        geometry = grid_frame_for(script.ego.pose_at(ti), template.width,
                                  template.height, template.resolution)
        occ, vel, veh = render_frame(script, ti, config.sensor, geometry,
                                     config.v_static_thresh)
        frame = compose_input_frame(occ, vel, veh, timestamp=ti)
        poses.append(geometry.origin_pose)
        data.append(frame.channels)
    geometry0 = grid_frame_for(script.ego.pose_at(0.0), template.width,
                               template.height, template.resolution)
    container.write_scene(path, geometry0, list(FRAME_CHANNELS), config.step_seconds,
                          times, poses, data)
    with open(path / "script.json", "w") as fh:
        json.dump(script.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def generate_dataset(config: RunConfig, out_dir: str | Path | None = None,
                     write_frames: bool = True,
                     seeds: list[int] | None = None) -> Path:
    """Write train/val scene containers, scripts and window indices.

    ``seeds`` overrides the configured scene seed range; the train/val split
    still follows ``config.train_fraction`` and stays disjoint.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.to_json(out / "config.json")
    if seeds is not None:
        n_train = int(round(len(seeds) * config.train_fraction))
        train_seeds, val_seeds = seeds[:n_train], seeds[n_train:]
    else:
        train_seeds, val_seeds = scene_seeds(config)
    times = window_times(config)
    for split, seeds in (("train", train_seeds), ("val", val_seeds)):
        split_dir = out / split
        split_dir.mkdir(exist_ok=True)
        for seed in seeds:
            script = generate_scene(seed, config.world)
            scene_dir = split_dir / f"scene_{seed:08d}"
            if write_frames:
                write_scene_container(scene_dir, script, config)
            else:
                scene_dir.mkdir(parents=True, exist_ok=True)
                with open(scene_dir / "script.json", "w") as fh:
                    json.dump(script.to_dict(), fh, indent=2, sort_keys=True)
                    fh.write("\n")
        index = {"seeds": seeds, "window_times": times}
        with open(split_dir / "index.json", "w") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return out


def load_split(dataset_dir: str | Path, split: str, config: RunConfig) -> SampleSet:
    """Load one split's scripts and window index from a dataset directory."""
    split_dir = Path(dataset_dir) / split
    with open(split_dir / "index.json") as fh:
        index = json.load(fh)
    scripts = []
    for seed in index["seeds"]:
        with open(split_dir / f"scene_{seed:08d}" / "script.json") as fh:
            scripts.append(SceneScript.from_dict(json.load(fh)))
    windows = [(i, float(t)) for i in range(len(scripts))
               for t in index["window_times"]]
    return SampleSet(scripts=scripts, windows=windows, config=config)
