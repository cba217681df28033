"""Grid geometry and the one set of coordinate conventions used everywhere.

Conventions
-----------
* World frame: ``x``, ``y`` in meters, ``heading`` in radians, counter-clockwise
  from the world +x axis.
* A grid is an ``h x w`` array indexed ``[row, col]`` with row 0 at the top.
* Grid local frame: origin at the grid center, +x along increasing columns
  (right in the image), +y up the image (decreasing rows).  ``origin_pose`` is
  the SE(2) pose of the grid center in world coordinates; its heading is the
  world angle of the grid +x axis.
* An agent "oriented upwards" therefore has its forward direction along the
  grid +y axis, i.e. the grid heading is the agent heading minus pi/2.
* Velocity channels ``(vx, vy)`` are meters/second along the grid local axes.
* Flow channels ``(fx, fy)`` are cell displacements along (+cols, +rows); see
  :mod:`gridcast.warp` for the backward-gather semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Pose:
    """SE(2) pose: position in meters, heading in radians CCW from world +x."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise ValueError(f"pose components must be finite, got {self}")

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, -s], [s, c]])

    def transform_points(self, local_xy: np.ndarray) -> np.ndarray:
        """Map points from this pose's local frame into the world frame."""
        local_xy = np.asarray(local_xy, dtype=float)
        return local_xy @ self.rotation.T + np.array([self.x, self.y])

    def inverse_transform_points(self, world_xy: np.ndarray) -> np.ndarray:
        """Map world points into this pose's local frame."""
        world_xy = np.asarray(world_xy, dtype=float)
        return (world_xy - np.array([self.x, self.y])) @ self.rotation

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.heading]


@dataclass(frozen=True)
class GridGeometry:
    """Shape, scale and world placement of a BEV grid.

    Two grids may be combined in an operation only when their geometries are
    equal (dataclass equality, exact).
    """

    width: int
    height: int
    resolution: float
    origin_pose: Pose

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        if not (math.isfinite(self.resolution) and self.resolution > 0):
            raise ValueError(f"resolution must be positive, got {self.resolution}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def extent(self) -> tuple[float, float]:
        """Metric side lengths (along x/cols, along y/rows)."""
        return (self.width * self.resolution, self.height * self.resolution)

    # --- continuous pixel coordinates -------------------------------------
    # "Pixel" coordinates (px, py) are continuous (col, row) indices; the
    # center of cell [r, c] is at (px, py) = (c, r).

    def pixel_to_local(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """(col, row) pixel coordinates -> metric points in the grid local frame."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        lx = (px - (self.width - 1) / 2.0) * self.resolution
        ly = ((self.height - 1) / 2.0 - py) * self.resolution
        return np.stack([lx, ly], axis=-1)

    def local_to_pixel(self, local_xy: np.ndarray) -> np.ndarray:
        """Metric points in the local frame -> continuous (col, row) coordinates."""
        local_xy = np.asarray(local_xy, dtype=float)
        px = local_xy[..., 0] / self.resolution + (self.width - 1) / 2.0
        py = (self.height - 1) / 2.0 - local_xy[..., 1] / self.resolution
        return np.stack([px, py], axis=-1)

    def world_to_pixel(self, world_xy: np.ndarray) -> np.ndarray:
        return self.local_to_pixel(self.origin_pose.inverse_transform_points(world_xy))

    def pixel_to_world(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        return self.origin_pose.transform_points(self.pixel_to_local(px, py))

    def cell_centers_world(self) -> np.ndarray:
        """World coordinates of every cell center, shape (h, w, 2)."""
        cols, rows = np.meshgrid(np.arange(self.width), np.arange(self.height))
        return self.pixel_to_world(cols, rows)

    def with_origin(self, pose: Pose) -> "GridGeometry":
        return GridGeometry(self.width, self.height, self.resolution, pose)


def grid_frame_for(pose: Pose, width: int, height: int, resolution: float) -> GridGeometry:
    """Geometry centered on ``pose`` with the pose's forward axis pointing up.

    The grid heading is ``pose.heading - pi/2`` so that an agent at ``pose``
    renders centered and oriented upwards in the image.
    """
    return GridGeometry(
        width=width,
        height=height,
        resolution=resolution,
        origin_pose=Pose(pose.x, pose.y, pose.heading - math.pi / 2.0),
    )


def rotate_vectors(vx: np.ndarray, vy: np.ndarray, angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotate local-frame vector fields (grid axes, +y up) by ``angle`` CCW."""
    c, s = math.cos(angle), math.sin(angle)
    return c * vx - s * vy, s * vx + c * vy


def rotate_flow(fx: np.ndarray, fy: np.ndarray, angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotate pixel-frame vector fields (+cols, +rows with row down) by ``angle``.

    Pixel axes are left-handed relative to the grid local frame (row grows
    downward), so a CCW world rotation appears as a CW rotation here.
    """
    c, s = math.cos(angle), math.sin(angle)
    return c * fx + s * fy, -s * fx + c * fy
