"""Grid evaluation metrics: soft/binary overlap, dynamic recall, EPE, MSE.

Metrics that have no ground truth support (empty masks) return ``nan`` as the
undefined flag; aggregation skips undefined entries rather than counting them
as zero, and reports how many entries were defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import SequenceSample

BINARY_THRESHOLD = 0.5

_CLASS_KEYS = (("vehicle", "veh"), ("pedestrian", "ped"), ("cyclist", "cyc"))


def _check_prob(pred: np.ndarray):
    if pred.min() < 0.0 or pred.max() > 1.0:
        raise ValueError("predictions must lie in [0, 1]")


def soft_overlap(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Probability-weighted IoU and recall against a binary ground truth."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_prob(pred)
    inter = float((pred * gt).sum())
    gt_sum = float(gt.sum())
    if gt_sum == 0.0:
        return math.nan, math.nan
    union = float(pred.sum()) + gt_sum - inter
    iou = inter / union if union > 0 else math.nan
    return iou, inter / gt_sum


def binary_overlap(pred: np.ndarray, gt: np.ndarray,
                   threshold: float = BINARY_THRESHOLD) -> tuple[float, float]:
    """IoU and recall after thresholding the prediction."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    pred_bin = np.asarray(pred, dtype=np.float64) >= threshold
    gt_bin = np.asarray(gt, dtype=np.float64) > 0
    gt_sum = int(gt_bin.sum())
    if gt_sum == 0:
        return math.nan, math.nan
    inter = int((pred_bin & gt_bin).sum())
    union = int((pred_bin | gt_bin).sum())
    iou = inter / union if union > 0 else math.nan
    return iou, inter / gt_sum


def recall_dynamic(pred: np.ndarray, gt_dynamic_mask: np.ndarray,
                   threshold: float | None = None) -> float:
    """Recall restricted to dynamic-agent cells; soft when threshold is None."""
    mask = np.asarray(gt_dynamic_mask, dtype=np.float64) > 0
    total = int(mask.sum())
    if total == 0:
        return math.nan
    pred = np.asarray(pred, dtype=np.float64)
    if threshold is None:
        return float(pred[mask].sum()) / total
    return float((pred[mask] >= threshold).sum()) / total


def flow_epe(pred_fx: np.ndarray, pred_fy: np.ndarray, gt_fx: np.ndarray,
             gt_fy: np.ndarray, gt_dynamic_mask: np.ndarray) -> float:
    """Mean endpoint error over dynamic-agent cells, in cells."""
    if pred_fx.shape != gt_fx.shape or pred_fx.shape != gt_dynamic_mask.shape:
        raise ValueError("flow and mask shapes must match")
    mask = np.asarray(gt_dynamic_mask, dtype=np.float64) > 0
    if not mask.any():
        return math.nan
    err = np.hypot(np.asarray(pred_fx, np.float64) - gt_fx,
                   np.asarray(pred_fy, np.float64) - gt_fy)
    return float(err[mask].mean())


def mse(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch in mse")
    return float(((pred - gt) ** 2).mean())


@dataclass
class MetricReport:
    """Per-step metric curves plus horizon averages.

    ``per_step[name]`` is a length-T array with nan marking undefined steps;
    ``horizon[name]`` is the nan-skipping mean.  ``defined[name]`` counts the
    (sample, step) pairs that contributed; excluded empty-ground-truth entries
    are visible as the difference from the total.
    """

    per_step: dict[str, np.ndarray] = field(default_factory=dict)
    horizon: dict[str, float] = field(default_factory=dict)
    defined: dict[str, int] = field(default_factory=dict)
    num_samples: int = 1

    def finalize(self) -> "MetricReport":
        for name, values in self.per_step.items():
            values = np.asarray(values, dtype=np.float64)
            self.per_step[name] = values
            ok = np.isfinite(values)
            self.horizon[name] = float(values[ok].mean()) if ok.any() else math.nan
            self.defined.setdefault(name, int(ok.sum()))
        return self

    def to_dict(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "horizon": {k: self.horizon[k] for k in sorted(self.horizon)},
            "per_step": {k: list(map(float, self.per_step[k])) for k in sorted(self.per_step)},
            "defined": {k: self.defined[k] for k in sorted(self.defined)},
        }


# Metric set of the evaluation protocol: soft metrics for the vehicle
# prediction grids, binary metrics for the thresholded prediction, the
# warped-times-predicted product and the raw warped grids, EPE for flow,
# per-channel MSE for the occupancy states, and per-class dynamic recall for
# the dynamic occupancy channel and the warped dynamic grids.
def evaluate_bundle(det: np.ndarray, pred: np.ndarray, ogm: np.ndarray,
                    warped_veh: np.ndarray, warped_dyn: np.ndarray,
                    sample: SequenceSample,
                    threshold: float = BINARY_THRESHOLD) -> MetricReport:
    """Score one sample's outputs against its ground truth.

    Arrays: ``det (2, h, w)``, ``pred (T, 3, h, w)``, ``ogm (T, 3, h, w)``,
    ``warped_* (T, h, w)``.
    """
    steps = len(sample.gt_future)
    if pred.shape[0] != steps or ogm.shape[0] != steps or warped_veh.shape[0] != steps:
        raise ValueError("prediction horizon does not match the sample")
    curves: dict[str, list[float]] = {}

    def push(name: str, value: float):
        curves.setdefault(name, []).append(value)

    for tau in range(steps):
        target = sample.gt_future[tau]
        gt_veh = target.veh.prob
        veh_prob = pred[tau, 0]
        flow_x, flow_y = pred[tau, 1], pred[tau, 2]
        class_masks = sample.dyn_class_masks[tau + 1]
        dyn_mask = np.clip(sum(class_masks.values()), 0, 1)
        dyn_veh_mask = class_masks["vehicle"]

        iou, rec = soft_overlap(veh_prob, gt_veh)
        push("veh_soft_iou", iou)
        push("veh_soft_recall", rec)
        push("veh_soft_recall_dynamic", recall_dynamic(veh_prob, dyn_veh_mask))

        iou, rec = binary_overlap(veh_prob, gt_veh, threshold)
        push("veh_iou", iou)
        push("veh_recall", rec)
        push("veh_recall_dynamic", recall_dynamic(veh_prob, dyn_veh_mask, threshold))

        product = warped_veh[tau] * veh_prob
        iou, rec = binary_overlap(product, gt_veh, threshold)
        push("warped_veh_weighted_iou", iou)
        push("warped_veh_weighted_recall", rec)
        push("warped_veh_weighted_recall_dynamic",
             recall_dynamic(product, dyn_veh_mask, threshold))

        iou, rec = binary_overlap(warped_veh[tau], gt_veh, threshold)
        push("warped_veh_iou", iou)
        push("warped_veh_recall", rec)
        push("warped_veh_recall_dynamic",
             recall_dynamic(warped_veh[tau], dyn_veh_mask, threshold))

        push("flow_epe", flow_epe(flow_x, flow_y, target.flow.fx, target.flow.fy, dyn_mask))

        push("mse_unk", mse(ogm[tau, 0], target.ogm.unk))
        push("mse_stat", mse(ogm[tau, 1], target.ogm.stat))
        push("mse_dyn", mse(ogm[tau, 2], target.ogm.dyn))

        for kind, short in _CLASS_KEYS:
            push(f"dyn_recall_{short}",
                 recall_dynamic(ogm[tau, 2], class_masks[kind], threshold))
            push(f"warped_dyn_recall_{short}",
                 recall_dynamic(warped_dyn[tau], class_masks[kind], threshold))

    report = MetricReport(per_step={k: np.array(v) for k, v in curves.items()})
    return report.finalize()


def aggregate_reports(reports: list[MetricReport]) -> MetricReport:
    """Average per-step curves across samples, skipping undefined entries."""
    if not reports:
        raise ValueError("no reports to aggregate")
    names = sorted(reports[0].per_step)
    per_step = {}
    defined = {}
    for name in names:
        stacked = np.stack([r.per_step[name] for r in reports])
        ok = np.isfinite(stacked)
        sums = np.where(ok, stacked, 0.0).sum(axis=0)
        counts = ok.sum(axis=0)
        with np.errstate(invalid="ignore"):
            per_step[name] = np.where(counts > 0, sums / np.maximum(counts, 1), math.nan)
        defined[name] = int(ok.sum())
    out = MetricReport(per_step=per_step, defined=defined, num_samples=len(reports))
    return out.finalize()
