"""Binary scene container round trips."""

import numpy as np
import pytest

from gridcast import container
from gridcast.geometry import GridGeometry, Pose


def test_round_trip(tmp_path, rng):
    geom = GridGeometry(8, 8, 0.5, Pose(1.0, 2.0, 0.3))
    data = [rng.random((6, 8, 8)).astype(np.float32) for _ in range(3)]
    poses = [Pose(float(i), 0.0, 0.1 * i) for i in range(3)]
    times = [0.0, 0.5, 1.0]
    container.write_scene(tmp_path / "scene", geom, ["a", "b", "c", "d", "e", "f"],
                          0.5, times, poses, data)
    scene = container.read_scene(tmp_path / "scene")
    assert scene.geometry == geom
    assert scene.channels == ["a", "b", "c", "d", "e", "f"]
    assert scene.timestep == 0.5
    assert scene.times == times
    assert scene.poses == poses
    for orig, loaded in zip(data, scene.data):
        assert np.array_equal(orig, loaded)


def test_rewrite_is_byte_identical(tmp_path, rng):
    geom = GridGeometry(4, 4, 1.0, Pose(0, 0, 0))
    data = [rng.random((2, 4, 4)).astype(np.float32)]
    for name in ("one", "two"):
        container.write_scene(tmp_path / name, geom, ["x", "y"], 0.5, [0.0],
                              [Pose(0, 0, 0)], data)
    for rel in ("manifest.json", "frames/frame_000000.bin"):
        assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "two" / rel).read_bytes()


def test_shape_mismatch_rejected(tmp_path):
    geom = GridGeometry(4, 4, 1.0, Pose(0, 0, 0))
    with pytest.raises(ValueError):
        container.write_scene(tmp_path / "scene", geom, ["x"], 0.5, [0.0],
                              [Pose(0, 0, 0)], [np.zeros((1, 5, 5), dtype=np.float32)])
