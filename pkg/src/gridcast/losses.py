"""Composite multi-head training loss.

Every term operates on torch tensors so gradients reach the network; the same
functions accept float64 inputs for numerical checking.  Probabilities are
clipped to ``[CLIP_EPS, 1 - CLIP_EPS]`` before any logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import torch

CLIP_EPS = 1e-6


def _check_shapes(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def _bce(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    p = pred.clamp(CLIP_EPS, 1.0 - CLIP_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p))


def classification_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy over all cells (and steps, if present)."""
    _check_shapes(pred, target, "classification_loss")
    return _bce(pred, target).mean()


def flow_loss(pred_flow: torch.Tensor, gt_flow: torch.Tensor,
              gt_stat: torch.Tensor, normalize_by_mask: bool = False) -> torch.Tensor:
    """Masked L1 flow regression.

    Shapes: flows ``(..., T, 2, h, w)``, static channel ``(..., T, h, w)``.
    The mask keeps cells with nonzero ground-truth flow or static occupancy
    above 0.5.  The sum is normalized by ``h*w*T`` (an empty mask gives 0); the
    ``normalize_by_mask`` switch divides by the mask size instead.
    """
    _check_shapes(pred_flow, gt_flow, "flow_loss")
    if gt_stat.shape != gt_flow.shape[:-3] + gt_flow.shape[-2:]:
        raise ValueError(f"flow_loss: static mask shape {tuple(gt_stat.shape)} does not "
                         f"match flow shape {tuple(gt_flow.shape)}")
    mask = ((gt_flow != 0).any(dim=-3) | (gt_stat > 0.5)).to(pred_flow.dtype)
    per_cell = (pred_flow - gt_flow).abs().sum(dim=-3)
    t, h, w = gt_stat.shape[-3:]
    masked = (per_cell * mask).sum(dim=(-1, -2, -3))
    if normalize_by_mask:
        denom = mask.sum(dim=(-1, -2, -3)).clamp(min=1.0)
    else:
        denom = float(t * h * w)
    return (masked / denom).mean()


def ogm_loss(pred: torch.Tensor, target: torch.Tensor
             ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-channel mean squared error on ``(..., T, 3, h, w)`` occupancy states.

    Returns the (unknown, static, dynamic) channel losses separately so each
    can carry its own weight.
    """
    _check_shapes(pred, target, "ogm_loss")
    sq = (pred - target) ** 2
    per_channel = sq.mean(dim=tuple(i for i in range(sq.ndim) if i != sq.ndim - 3))
    return per_channel[0], per_channel[1], per_channel[2]


def warped_loss(warped: torch.Tensor, weighting: torch.Tensor,
                target: torch.Tensor) -> torch.Tensor:
    """BCE between the product of warped and predicted occupancy and the target.

    Gradients reach the flow head through ``warped`` and the occupancy head
    through ``weighting``.
    """
    _check_shapes(warped, weighting, "warped_loss")
    _check_shapes(warped, target, "warped_loss")
    return _bce(warped * weighting, target).mean()


def kl_loss(q_mean: torch.Tensor, q_logvar: torch.Tensor,
            p_mean: torch.Tensor, p_logvar: torch.Tensor) -> torch.Tensor:
    """KL(q || p) for diagonal Gaussians, summed over dims, averaged over batch."""
    _check_shapes(q_mean, p_mean, "kl_loss")
    _check_shapes(q_logvar, p_logvar, "kl_loss")
    term = (torch.exp(q_logvar - p_logvar)
            + (q_mean - p_mean) ** 2 / torch.exp(p_logvar)
            - 1.0 + p_logvar - q_logvar)
    per_sample = 0.5 * term.sum(dim=-1)
    return per_sample.mean()


@dataclass(frozen=True)
class LossWeights:
    """Per-term coefficients; defaults are the urban-driving preset."""

    det: float = 0.25
    veh: float = 1.0
    flow: float = 10.0
    unk: float = 1.0
    stat: float = 1.0
    dyn: float = 6.0
    w_veh: float = 0.1
    w_dyn: float = 0.01
    kl: float = 0.005

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be nonnegative")

    @staticmethod
    def occlusion_heavy() -> "LossWeights":
        """Higher flow weight; helps in heavily occluded scenes."""
        return LossWeights(flow=50.0)


_TERM_NAMES = ("det", "veh", "flow", "kl", "unk", "stat", "dyn", "w_veh", "w_dyn")


@dataclass
class LossReport:
    """Per-term loss values plus the weighted total.

    Disabled terms are ``None`` and excluded from the total.  Values may be
    floats or scalar tensors (the total then supports ``backward()``).
    """

    det: object = None
    veh: object = None
    flow: object = None
    kl: object = None
    unk: object = None
    stat: object = None
    dyn: object = None
    w_veh: object = None
    w_dyn: object = None
    total: object = 0.0

    def terms(self) -> dict:
        return {name: getattr(self, name) for name in _TERM_NAMES
                if getattr(self, name) is not None}

    def scalars(self) -> dict[str, float]:
        out = {}
        for name, value in {**self.terms(), "total": self.total}.items():
            out[name] = float(value.detach()) if torch.is_tensor(value) else float(value)
        return out


def total_loss(weights: LossWeights, det_veh=None, det_dyn=None, veh=None, flow=None,
               kl=None, unk=None, stat=None, dyn=None, w_veh=None, w_dyn=None
               ) -> LossReport:
    """Combine term values into the weighted total.

    The detection term is the sum of the vehicle and dynamic detection losses
    under the single detection weight.  Terms left as ``None`` are skipped.
    """
    det = None
    if det_veh is not None or det_dyn is not None:
        det = sum(v for v in (det_veh, det_dyn) if v is not None)
    report = LossReport(det=det, veh=veh, flow=flow, kl=kl, unk=unk, stat=stat,
                        dyn=dyn, w_veh=w_veh, w_dyn=w_dyn)
    total = 0.0
    for name, value in report.terms().items():
        total = total + getattr(weights, name) * value
    report.total = total
    return report
