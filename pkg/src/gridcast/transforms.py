"""Frame-to-frame resampling of grids: SE(2) re-expression, crop and resize.

``transform_grid`` re-expresses a grid in another frame (the core of the
allo-centric pipeline); ``crop_and_resize`` implements the dataset-style
center crop followed by an area-preserving resample.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .geometry import GridGeometry, Pose, rotate_flow, rotate_vectors
from .grids import (
    FrameTensor,
    OccupancyStateGrid,
    SceneFlowGrid,
    VehicleMaskGrid,
    VelocityGrid,
)

_INTERP_ORDER = {"nearest": 0, "bilinear": 1}

# Fill values for samples taken outside the source grid: unseen space is
# unknown for state grids, empty for masks, velocities and flow.
_UNKNOWN_FILL = 1.0


def _resample(channel: np.ndarray, coords: np.ndarray, interp: str, cval: float) -> np.ndarray:
    order = _INTERP_ORDER[interp]
    out = ndimage.map_coordinates(channel.astype(np.float64), coords, order=order,
                                  mode="constant", cval=cval)
    return out.astype(np.float32)


def _sample_coords(src: GridGeometry, dst: GridGeometry) -> np.ndarray:
    """Source (row, col) sampling coordinates for every destination cell."""
    centers = dst.cell_centers_world()
    pix = src.world_to_pixel(centers.reshape(-1, 2)).reshape(dst.height, dst.width, 2)
    return np.stack([pix[..., 1], pix[..., 0]])


def transform_grid(grid, src_pose: Pose | None, dst_pose: Pose, interp: str = "bilinear"):
    """Resample ``grid`` from the frame at ``src_pose`` into the frame at ``dst_pose``.

    The grid content is interpreted as posed at ``src_pose`` (defaults to the
    grid's stored origin pose); the result has the same shape and resolution,
    posed at ``dst_pose``.  Vector channels are rotated by the relative
    heading.  Cells that sample outside the source read the out-of-view fill:
    unknown=1 for state grids, 0 for everything else.
    """
    if interp not in _INTERP_ORDER:
        raise ValueError(f"interp must be one of {sorted(_INTERP_ORDER)}, got {interp!r}")
    geometry = grid.geometry
    if src_pose is None:
        src_pose = geometry.origin_pose
    src = geometry.with_origin(src_pose)
    dst = geometry.with_origin(dst_pose)
    coords = _sample_coords(src, dst)
    angle = src_pose.heading - dst_pose.heading

    if isinstance(grid, OccupancyStateGrid):
        return OccupancyStateGrid(
            unk=np.clip(_resample(grid.unk, coords, interp, _UNKNOWN_FILL), 0.0, 1.0),
            stat=np.clip(_resample(grid.stat, coords, interp, 0.0), 0.0, 1.0),
            dyn=np.clip(_resample(grid.dyn, coords, interp, 0.0), 0.0, 1.0),
            geometry=dst,
        )
    if isinstance(grid, VehicleMaskGrid):
        prob = np.clip(_resample(grid.prob, coords, interp, 0.0), 0.0, 1.0)
        return VehicleMaskGrid(prob=prob, geometry=dst)
    if isinstance(grid, VelocityGrid):
        vx = _resample(grid.vx, coords, interp, 0.0)
        vy = _resample(grid.vy, coords, interp, 0.0)
        vx, vy = rotate_vectors(vx, vy, angle)
        return VelocityGrid(vx=vx, vy=vy, geometry=dst)
    if isinstance(grid, SceneFlowGrid):
        fx = _resample(grid.fx, coords, interp, 0.0)
        fy = _resample(grid.fy, coords, interp, 0.0)
        fx, fy = rotate_flow(fx, fy, angle)
        return SceneFlowGrid(fx=fx, fy=fy, geometry=dst)
    if isinstance(grid, FrameTensor):
        occ = transform_grid(grid.occupancy(), src_pose, dst_pose, interp)
        vel = transform_grid(grid.velocity(), src_pose, dst_pose, interp)
        veh = transform_grid(grid.vehicle_mask(), src_pose, dst_pose, interp)
        channels = np.stack([occ.unk, occ.stat, occ.dyn, vel.vx, vel.vy, veh.prob])
        return FrameTensor(channels=channels, geometry=dst, timestamp=grid.timestamp)
    raise TypeError(f"unsupported grid type {type(grid).__name__}")


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix of interval-overlap weights."""
    scale = n_in / n_out
    weights = np.zeros((n_out, n_in))
    for j in range(n_out):
        lo, hi = j * scale, (j + 1) * scale
        i0, i1 = int(np.floor(lo)), int(np.ceil(hi))
        for i in range(i0, min(i1, n_in)):
            overlap = min(hi, i + 1) - max(lo, i)
            if overlap > 0:
                weights[j, i] = overlap / scale
    return weights


def _area_resize(channel: np.ndarray, n_out: int) -> np.ndarray:
    wr = _area_weights(channel.shape[0], n_out)
    wc = _area_weights(channel.shape[1], n_out)
    return (wr @ channel.astype(np.float64) @ wc.T).astype(np.float32)


def crop_and_resize(grid, extent_m: float, out_cells: int):
    """Center-crop to ``extent_m`` per side, then area-resample to ``out_cells``.

    Probabilities remain in [0, 1] (the resample is a convex combination).
    Flow channels are rescaled to the new cell size; velocities are metric and
    unchanged.
    """
    geometry = grid.geometry
    res = geometry.resolution
    crop_cells = int(round(extent_m / res))
    if crop_cells > min(geometry.width, geometry.height):
        raise ValueError(
            f"crop extent {extent_m} m exceeds source extent "
            f"{min(geometry.extent):.3f} m")
    if crop_cells < 1 or out_cells < 1:
        raise ValueError("crop and output sizes must be at least one cell")

    off_c = (geometry.width - crop_cells) // 2
    off_r = (geometry.height - crop_cells) // 2
    # World pose of the cropped region's center (exact even for odd offsets).
    cx = off_c + (crop_cells - 1) / 2.0
    cy = off_r + (crop_cells - 1) / 2.0
    center_world = geometry.pixel_to_world(np.array(cx), np.array(cy))
    out_res = crop_cells * res / out_cells
    out_geom = GridGeometry(
        width=out_cells, height=out_cells, resolution=out_res,
        origin_pose=Pose(float(center_world[0]), float(center_world[1]),
                         geometry.origin_pose.heading),
    )

    def resize(channel: np.ndarray) -> np.ndarray:
        cropped = channel[off_r:off_r + crop_cells, off_c:off_c + crop_cells]
        return _area_resize(cropped, out_cells)

    if isinstance(grid, OccupancyStateGrid):
        return OccupancyStateGrid(
            unk=np.clip(resize(grid.unk), 0.0, 1.0),
            stat=np.clip(resize(grid.stat), 0.0, 1.0),
            dyn=np.clip(resize(grid.dyn), 0.0, 1.0),
            geometry=out_geom)
    if isinstance(grid, VehicleMaskGrid):
        return VehicleMaskGrid(prob=np.clip(resize(grid.prob), 0.0, 1.0), geometry=out_geom)
    if isinstance(grid, VelocityGrid):
        return VelocityGrid(vx=resize(grid.vx), vy=resize(grid.vy), geometry=out_geom)
    if isinstance(grid, SceneFlowGrid):
        cell_scale = res / out_res
        return SceneFlowGrid(fx=resize(grid.fx) * cell_scale,
                             fy=resize(grid.fy) * cell_scale,
                             geometry=out_geom)
    if isinstance(grid, FrameTensor):
        occ = crop_and_resize(grid.occupancy(), extent_m, out_cells)
        vel = crop_and_resize(grid.velocity(), extent_m, out_cells)
        veh = crop_and_resize(grid.vehicle_mask(), extent_m, out_cells)
        channels = np.stack([occ.unk, occ.stat, occ.dyn, vel.vx, vel.vy, veh.prob])
        return FrameTensor(channels=channels, geometry=out_geom, timestamp=grid.timestamp)
    raise TypeError(f"unsupported grid type {type(grid).__name__}")
