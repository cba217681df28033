"""Backward-flow warping of occupancy grids.

``warp_once`` is a gather: the output at cell ``(r, c)`` is the input sampled
at ``(r + fy, c + fx)``, i.e. each cell pulls occupancy from where it came
from one step earlier.  Samples outside the grid read zero (occupancy leaves
the scene).  Cells with zero flow sample themselves, so untouched parts of the
grid pass through unchanged.

Bilinear mode is differentiable with respect to both the occupancy input and
the flow field, which is what lets training losses reach the flow head through
warped grids.  Nearest mode is exact for integer flows but carries no flow
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .grids import GeometryMismatchError, SceneFlowGrid

_MODES = ("bilinear", "nearest")


def _check_mode(mode: str):
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def _gather(prev: torch.Tensor, rows: torch.Tensor, cols: torch.Tensor) -> torch.Tensor:
    """Sample ``prev[..., rows, cols]`` with zero padding outside the grid."""
    h, w = prev.shape[-2:]
    valid = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    flat_idx = rows.clamp(0, h - 1) * w + cols.clamp(0, w - 1)
    flat = prev.reshape(*prev.shape[:-2], h * w)
    vals = torch.gather(flat, -1, flat_idx.reshape(*flat_idx.shape[:-2], h * w))
    return vals.reshape(prev.shape) * valid.to(prev.dtype)


def warp_once(prev: torch.Tensor, flow_x: torch.Tensor, flow_y: torch.Tensor,
              mode: str = "bilinear") -> torch.Tensor:
    """Warp one occupancy grid by one backward flow field.

    ``prev``, ``flow_x`` and ``flow_y`` share a trailing ``(h, w)`` shape and
    any common leading batch shape.
    """
    _check_mode(mode)
    if prev.shape != flow_x.shape or prev.shape != flow_y.shape:
        raise ValueError(f"shape mismatch: prev {tuple(prev.shape)}, "
                         f"flow {tuple(flow_x.shape)}/{tuple(flow_y.shape)}")
    h, w = prev.shape[-2:]
    rows = torch.arange(h, dtype=prev.dtype, device=prev.device).view(h, 1)
    cols = torch.arange(w, dtype=prev.dtype, device=prev.device).view(1, w)
    yy = rows + flow_y
    xx = cols + flow_x

    if mode == "nearest":
        return _gather(prev, torch.round(yy).long(), torch.round(xx).long())

    y0 = torch.floor(yy)
    x0 = torch.floor(xx)
    ty = yy - y0
    tx = xx - x0
    y0l, x0l = y0.long(), x0.long()
    v00 = _gather(prev, y0l, x0l)
    v01 = _gather(prev, y0l, x0l + 1)
    v10 = _gather(prev, y0l + 1, x0l)
    v11 = _gather(prev, y0l + 1, x0l + 1)
    top = v00 * (1 - tx) + v01 * tx
    bot = v10 * (1 - tx) + v11 * tx
    return top * (1 - ty) + bot * ty


def warp_sequence(seed: torch.Tensor, flows_x: torch.Tensor, flows_y: torch.Tensor,
                  mode: str = "bilinear") -> torch.Tensor:
    """Recursively warp ``seed`` through T flow fields.

    ``flows_x``/``flows_y`` have shape ``(T, *seed.shape)`` or
    ``(batch, T, h, w)`` with ``seed`` shaped ``(batch, h, w)``; the step axis
    is the one just before the spatial axes.  Returns the stacked warped
    sequence with the same layout as the flows.
    """
    _check_mode(mode)
    if flows_x.shape != flows_y.shape:
        raise ValueError("flow component shapes differ")
    if flows_x.ndim != seed.ndim + 1:
        raise ValueError(f"expected one step axis: seed {tuple(seed.shape)}, "
                         f"flows {tuple(flows_x.shape)}")
    steps = flows_x.shape[-3]
    if steps < 1:
        raise ValueError("need at least one flow step")
    out = []
    current = seed
    for tau in range(steps):
        current = warp_once(current, flows_x[..., tau, :, :], flows_y[..., tau, :, :], mode)
        out.append(current)
    return torch.stack(out, dim=-3)


@dataclass
class WarpedSequence:
    """Flow-guided occupancy sequence seeded from a detection grid."""

    grids: np.ndarray  # (T, h, w) in [0, 1]
    source: str        # "veh" or "dyn"


def warp_grid(prev: np.ndarray, flow: SceneFlowGrid, mode: str = "bilinear") -> np.ndarray:
    """Numpy convenience wrapper around :func:`warp_once`."""
    if prev.shape != flow.geometry.shape:
        raise GeometryMismatchError(
            f"grid shape {prev.shape} does not match flow geometry {flow.geometry.shape}")
    with torch.no_grad():
        out = warp_once(torch.from_numpy(np.ascontiguousarray(prev, dtype=np.float64)),
                        torch.from_numpy(flow.fx.astype(np.float64)),
                        torch.from_numpy(flow.fy.astype(np.float64)), mode)
    return out.numpy().astype(prev.dtype if prev.dtype == np.float64 else np.float32)


def warp_flow_grids(seed: np.ndarray, flows: list[SceneFlowGrid], source: str,
                    mode: str = "bilinear") -> WarpedSequence:
    """Recursive numpy warping of a seed grid through ground-truth style flows."""
    if not flows:
        raise ValueError("need at least one flow step")
    geom = flows[0].geometry
    for f in flows[1:]:
        if f.geometry != geom:
            raise GeometryMismatchError("flow geometries differ across steps")
    grids = []
    current = np.asarray(seed, dtype=np.float64)
    for f in flows:
        current = warp_grid(current, f, mode).astype(np.float64)
        grids.append(current.copy())
    return WarpedSequence(grids=np.stack(grids).astype(np.float32), source=source)
