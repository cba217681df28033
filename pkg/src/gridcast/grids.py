"""Grid value types shared by every stage of the pipeline.

All grids are numpy arrays paired with a :class:`~gridcast.geometry.GridGeometry`.
Operations treat grids as immutable: they never modify their inputs and return
new instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GridGeometry, Pose

PROB_SUM_EPS = 1e-6

FRAME_CHANNELS = ("unk", "stat", "dyn", "vx", "vy", "veh")


class GeometryMismatchError(ValueError):
    """Raised when an operation combines grids with different geometries."""


def check_same_geometry(*geometries: GridGeometry) -> GridGeometry:
    first = geometries[0]
    for g in geometries[1:]:
        if g != first:
            raise GeometryMismatchError(f"geometries differ: {first} vs {g}")
    return first


def _as_grid_array(a, geometry: GridGeometry, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float32)
    if a.shape != geometry.shape:
        raise ValueError(f"{name} has shape {a.shape}, geometry expects {geometry.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _check_unit_range(a: np.ndarray, name: str):
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1], got range "
                         f"[{a.min():.4g}, {a.max():.4g}]")


@dataclass
class OccupancyStateGrid:
    """Per-cell probabilities for the unknown / static / dynamic states.

    The free probability is implicit: ``1 - (unk + stat + dyn)``, clamped at 0.
    """

    unk: np.ndarray
    stat: np.ndarray
    dyn: np.ndarray
    geometry: GridGeometry

    def __post_init__(self):
        self.unk = _as_grid_array(self.unk, self.geometry, "unk")
        self.stat = _as_grid_array(self.stat, self.geometry, "stat")
        self.dyn = _as_grid_array(self.dyn, self.geometry, "dyn")
        for name in ("unk", "stat", "dyn"):
            _check_unit_range(getattr(self, name), name)
        total = self.unk.astype(np.float64) + self.stat + self.dyn
        if total.max() > 1.0 + PROB_SUM_EPS:
            raise ValueError(f"per-cell state probabilities sum to {total.max():.6f} > 1")

    @property
    def free(self) -> np.ndarray:
        return np.clip(1.0 - (self.unk + self.stat + self.dyn), 0.0, 1.0)

    def stacked(self) -> np.ndarray:
        return np.stack([self.unk, self.stat, self.dyn])


@dataclass
class VelocityGrid:
    """Per-cell velocity estimates (m/s) along the grid local axes."""

    vx: np.ndarray
    vy: np.ndarray
    geometry: GridGeometry

    def __post_init__(self):
        self.vx = _as_grid_array(self.vx, self.geometry, "vx")
        self.vy = _as_grid_array(self.vy, self.geometry, "vy")

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)


@dataclass
class VehicleMaskGrid:
    """Per-cell probability of being occupied by a vehicle (ego excluded)."""

    prob: np.ndarray
    geometry: GridGeometry

    def __post_init__(self):
        self.prob = _as_grid_array(self.prob, self.geometry, "prob")
        _check_unit_range(self.prob, "prob")


@dataclass
class SceneFlowGrid:
    """Per-cell backward displacement in cells per prediction step.

    ``fx`` is along +columns, ``fy`` along +rows.  A vector stored at a cell
    points to the location its occupancy came from one step earlier, so a cell
    moving right carries a negative ``fx``.
    """

    fx: np.ndarray
    fy: np.ndarray
    geometry: GridGeometry

    def __post_init__(self):
        self.fx = _as_grid_array(self.fx, self.geometry, "fx")
        self.fy = _as_grid_array(self.fy, self.geometry, "fy")

    def stacked(self) -> np.ndarray:
        return np.stack([self.fx, self.fy])

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.fx, self.fy)


@dataclass
class FrameTensor:
    """One 6-channel input frame, channels ordered (unk, stat, dyn, vx, vy, veh)."""

    channels: np.ndarray
    geometry: GridGeometry
    timestamp: float

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.shape != (6,) + self.geometry.shape:
            raise ValueError(f"expected channel shape {(6,) + self.geometry.shape}, "
                             f"got {self.channels.shape}")
        if not np.all(np.isfinite(self.channels)):
            raise ValueError("frame contains non-finite values")
        for idx in (0, 1, 2, 5):
            _check_unit_range(self.channels[idx], FRAME_CHANNELS[idx])

    def occupancy(self) -> OccupancyStateGrid:
        return OccupancyStateGrid(*self.channels[:3], geometry=self.geometry)

    def velocity(self) -> VelocityGrid:
        return VelocityGrid(self.channels[3], self.channels[4], geometry=self.geometry)

    def vehicle_mask(self) -> VehicleMaskGrid:
        return VehicleMaskGrid(self.channels[5], geometry=self.geometry)


def compose_input_frame(occupancy: OccupancyStateGrid,
                        velocity: VelocityGrid,
                        vehicles: VehicleMaskGrid,
                        timestamp: float = 0.0) -> FrameTensor:
    """Stack state, velocity and vehicle grids into one input frame.

    Channel order is (unk, stat, dyn, vx, vy, veh); values are copied, never
    modified.
    """
    geometry = check_same_geometry(occupancy.geometry, velocity.geometry, vehicles.geometry)
    channels = np.stack([
        occupancy.unk, occupancy.stat, occupancy.dyn,
        velocity.vx, velocity.vy,
        vehicles.prob,
    ])
    return FrameTensor(channels=channels, geometry=geometry, timestamp=timestamp)


@dataclass
class FutureTarget:
    """Ground truth for one future step: vehicle mask, backward flow, occupancy."""

    veh: VehicleMaskGrid
    flow: SceneFlowGrid
    ogm: OccupancyStateGrid

    def __post_init__(self):
        check_same_geometry(self.veh.geometry, self.flow.geometry, self.ogm.geometry)


@dataclass
class DetectionTarget:
    """Ground truth at the reference step: vehicle mask and binary dynamic grid."""

    veh: VehicleMaskGrid
    dyn: np.ndarray

    def __post_init__(self):
        self.dyn = np.asarray(self.dyn, dtype=np.float32)
        if self.dyn.shape != self.veh.geometry.shape:
            raise ValueError("dynamic target shape does not match geometry")


@dataclass
class SequenceSample:
    """One training/evaluation window, fully expressed in the reference frame.

    ``history`` holds N+1 input frames ending at the reference time,
    ``gt_future`` holds T target triples.  ``dyn_class_masks`` carries binary
    dynamic-agent masks per class ("vehicle", "pedestrian", "cyclist") for
    steps 0..T (step 0 is the reference time); metrics use them for
    per-class recall.
    """

    history: list[FrameTensor]
    gt_detection: DetectionTarget
    gt_future: list[FutureTarget]
    reference_pose: Pose
    dyn_class_masks: list[dict[str, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if not self.history:
            raise ValueError("history must contain at least one frame")
        if not self.gt_future:
            raise ValueError("gt_future must contain at least one step")
        geoms = [f.geometry for f in self.history]
        geoms += [self.gt_detection.veh.geometry]
        geoms += [t.veh.geometry for t in self.gt_future]
        check_same_geometry(*geoms)

    @property
    def geometry(self) -> GridGeometry:
        return self.history[0].geometry

    @property
    def num_history(self) -> int:
        """N: number of past steps before the reference frame."""
        return len(self.history) - 1

    @property
    def num_future(self) -> int:
        return len(self.gt_future)
