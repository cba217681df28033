"""Binary grid container: one directory per scene.

Layout::

    scene_dir/
      manifest.json             # geometry, channel order, timestep, poses
      frames/frame_000123.bin   # raw little-endian float32, C order, (C, h, w)

The manifest is plain JSON with sorted keys so regeneration is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import GridGeometry, Pose

FORMAT_VERSION = 1


def geometry_to_dict(geometry: GridGeometry) -> dict:
    return {
        "width": geometry.width,
        "height": geometry.height,
        "resolution": geometry.resolution,
        "origin_pose": geometry.origin_pose.to_list(),
    }


def geometry_from_dict(data: dict) -> GridGeometry:
    return GridGeometry(
        width=int(data["width"]),
        height=int(data["height"]),
        resolution=float(data["resolution"]),
        origin_pose=Pose(*data["origin_pose"]),
    )


@dataclass
class SceneFrames:
    """In-memory view of a scene container."""

    geometry: GridGeometry
    channels: list[str]
    timestep: float
    times: list[float]
    poses: list[Pose]
    data: list[np.ndarray]  # per frame, (C, h, w) float32

    @property
    def frame_count(self) -> int:
        return len(self.data)


def write_scene(path: str | Path, geometry: GridGeometry, channels: list[str],
                timestep: float, times: list[float], poses: list[Pose],
                data: list[np.ndarray], extra: dict | None = None) -> Path:
    """Write frames and manifest; returns the scene directory path."""
    path = Path(path)
    (path / "frames").mkdir(parents=True, exist_ok=True)
    n_ch = len(channels)
    frames_meta = []
    for idx, (t, pose, arr) in enumerate(zip(times, poses, data)):
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.shape != (n_ch,) + geometry.shape:
            raise ValueError(f"frame {idx} has shape {arr.shape}, expected "
                             f"{(n_ch,) + geometry.shape}")
        rel = f"frames/frame_{idx:06d}.bin"
        (path / rel).write_bytes(arr.astype("<f4").tobytes())
        frames_meta.append({"index": idx, "time": t, "pose": pose.to_list(), "file": rel})
    manifest = {
        "format_version": FORMAT_VERSION,
        "geometry": geometry_to_dict(geometry),
        "channels": list(channels),
        "timestep": timestep,
        "frame_count": len(data),
        "frames": frames_meta,
    }
    if extra:
        manifest.update(extra)
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_scene(path: str | Path) -> SceneFrames:
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported container version {manifest.get('format_version')}")
    geometry = geometry_from_dict(manifest["geometry"])
    channels = list(manifest["channels"])
    shape = (len(channels),) + geometry.shape
    times, poses, data = [], [], []
    for meta in manifest["frames"]:
        raw = (path / meta["file"]).read_bytes()
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        times.append(float(meta["time"]))
        poses.append(Pose(*meta["pose"]))
        data.append(arr)
    return SceneFrames(geometry=geometry, channels=channels,
                       timestep=float(manifest["timestep"]),
                       times=times, poses=poses, data=data)
