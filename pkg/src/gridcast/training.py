"""Training and evaluation orchestration.

A run is fully determined by its :class:`~gridcast.config.RunConfig`: the seed
controls scene generation, parameter initialization, data order (re-derived
per epoch so resuming is exact) and latent sampling.  Checkpoints are written
at every epoch boundary and restore optimizer and RNG state, so a resumed run
reproduces an uninterrupted one bit for bit under serialized execution.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, config_from_dict
from .dataset import SampleSet, collate, load_split, sample_set_for, scene_seeds
from .grids import SequenceSample
from .losses import (
    LossReport,
    classification_loss,
    flow_loss,
    kl_loss,
    ogm_loss,
    total_loss,
    warped_loss,
)
from .metrics import MetricReport, aggregate_reports, evaluate_bundle
from .model import ForwardResult, GridcastModel

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; the last good checkpoint is kept."""


def compute_losses(result: ForwardResult, batch: dict, config: RunConfig) -> LossReport:
    """Evaluate every enabled loss term for one forward pass."""
    bundle = result.bundle
    switches = config.ablation
    terms: dict = {}
    if switches.enable_det:
        terms["det_veh"] = classification_loss(bundle.det_veh, batch["det_veh"])
        terms["det_dyn"] = classification_loss(bundle.det_dyn, batch["det_dyn"])
    terms["veh"] = classification_loss(bundle.veh, batch["future_veh"])
    if switches.enable_flow:
        terms["flow"] = flow_loss(bundle.flow, batch["future_flow"],
                                  batch["future_ogm"][:, :, 1])
    if result.future is not None:
        terms["kl"] = kl_loss(result.future.mean, result.future.log_variance,
                              result.present.mean, result.present.log_variance)
    if switches.enable_ogm:
        terms["unk"], terms["stat"], terms["dyn"] = ogm_loss(bundle.ogm,
                                                             batch["future_ogm"])
    if switches.enable_warped_losses:
        terms["w_veh"] = warped_loss(result.warped_veh, bundle.veh,
                                     batch["future_veh"])
        if switches.enable_ogm:
            terms["w_dyn"] = warped_loss(result.warped_dyn, bundle.ogm_dyn,
                                         batch["future_ogm"][:, :, 2])
    return total_loss(config.weights, **terms)


def save_checkpoint(path: str | Path, model: GridcastModel,
                    optimizer: torch.optim.Optimizer | None, config: RunConfig,
                    step: int, epoch: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "state_dict": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng": torch.get_rng_state(),
        "step": step,
        "epoch": epoch,
        "config": json.loads(config.to_json()),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[GridcastModel, RunConfig, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    config = config_from_dict(payload["config"])
    model = GridcastModel(config.backbone)
    model.load_state_dict(payload["state_dict"])
    return model, config, payload


@dataclass
class TrainResult:
    checkpoint: Path
    log_path: Path
    final_report: LossReport
    steps: int


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed & 0x7FFFFFFF, epoch]).permutation(n)


def _training_signature(config: RunConfig) -> dict:
    """Config content that must match for a checkpoint to be resumable.

    Output location and thread count are run metadata; the epoch budget may
    grow when continuing a run (per-epoch data order depends only on the seed
    and epoch index, so extending a run keeps determinism intact)."""
    data = json.loads(config.to_json())
    data.pop("out_dir", None)
    data.pop("threads", None)
    data["optim"] = dict(data["optim"])
    data["optim"].pop("epochs", None)
    return data


def run_training(config: RunConfig, dataset_dir: str | Path | None = None,
                 out_dir: str | Path | None = None,
                 resume_from: str | Path | None = None,
                 max_steps: int | None = None) -> TrainResult:
    """Train to the configured number of epochs; returns the final checkpoint.

    ``dataset_dir`` may point to a generated dataset; otherwise samples are
    built in memory from the configured scenes.  ``max_steps`` caps the total
    number of optimizer steps (for smoke tests).
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.threads > 0:
        torch.set_num_threads(config.threads)

    if dataset_dir is not None:
        train_set = load_split(dataset_dir, "train", config)
    else:
        train_seeds, _ = scene_seeds(config)
        train_set = sample_set_for(config, train_seeds)
    samples = train_set.materialize()
    if not samples:
        raise ValueError("training set is empty")

    torch.manual_seed(config.seed)
    model = GridcastModel(config.backbone)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.optim.learning_rate,
                                  weight_decay=config.optim.weight_decay)
    start_epoch, step = 0, 0
    if resume_from is not None:
        model, loaded_config, payload = load_checkpoint(resume_from)
        if _training_signature(loaded_config) != _training_signature(config):
            raise ValueError("checkpoint was produced by a different configuration")
        optimizer = torch.optim.AdamW(model.parameters(), lr=config.optim.learning_rate,
                                      weight_decay=config.optim.weight_decay)
        optimizer.load_state_dict(payload["optimizer"])
        torch.set_rng_state(payload["torch_rng"])
        start_epoch, step = payload["epoch"], payload["step"]

    log_path = out / "train_log.jsonl"
    log_fh = open(log_path, "a")
    last_good = copy.deepcopy(model.state_dict())
    report = LossReport()
    n = len(samples)
    batch_size = config.optim.batch_size
    done = False
    try:
        for epoch in range(start_epoch, config.optim.epochs):
            order = _epoch_order(config.seed, epoch, n)
            for lo in range(0, n, batch_size):
                batch = collate([samples[i] for i in order[lo:lo + batch_size]])
                result = model(batch, mode="train")
                report = compute_losses(result, batch, config)
                total = report.total
                if not torch.isfinite(total):
                    model.load_state_dict(last_good)
                    save_checkpoint(out / "checkpoint_abort.pt", model, optimizer,
                                    config, step, epoch)
                    raise TrainingDiverged(
                        f"non-finite loss at step {step} (epoch {epoch}); "
                        f"last good state saved to checkpoint_abort.pt")
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                last_good = copy.deepcopy(model.state_dict())
                step += 1
                log_fh.write(json.dumps({"step": step, "epoch": epoch,
                                         **report.scalars()}, sort_keys=True) + "\n")
                if max_steps is not None and step >= max_steps:
                    done = True
                    break
            save_checkpoint(out / "checkpoint_last.pt", model, optimizer, config,
                            step, epoch + 1)
            if done:
                break
    finally:
        log_fh.close()
    final = save_checkpoint(out / "checkpoint_final.pt", model, optimizer, config,
                            step, config.optim.epochs)
    return TrainResult(checkpoint=final, log_path=log_path, final_report=report,
                       steps=step)


def _eval_samples(model: GridcastModel, samples: list[SequenceSample],
                  batch_size: int = 8) -> list[MetricReport]:
    model.eval()
    reports = []
    with torch.no_grad():
        for lo in range(0, len(samples), batch_size):
            chunk = samples[lo:lo + batch_size]
            batch = collate(chunk)
            result = model({"history": batch["history"]}, mode="infer")
            det = result.bundle.det.numpy()
            pred = result.bundle.pred.numpy()
            ogm = result.bundle.ogm.numpy()
            wv = result.warped_veh.numpy()
            wd = result.warped_dyn.numpy()
            for i, sample in enumerate(chunk):
                reports.append(evaluate_bundle(det[i], pred[i], ogm[i], wv[i], wd[i],
                                               sample))
    model.train()
    return reports


def run_eval(checkpoint: str | Path, dataset_dir: str | Path | None = None,
             split: str = "val", out_dir: str | Path | None = None,
             sample_set: SampleSet | None = None) -> MetricReport:
    """Deterministic evaluation with the mean present latent.

    Writes ``report.json`` and per-step CSV curves when ``out_dir`` is given.
    """
    model, config, _ = load_checkpoint(checkpoint)
    if sample_set is None:
        if dataset_dir is not None:
            sample_set = load_split(dataset_dir, split, config)
        else:
            train_seeds, val_seeds = scene_seeds(config)
            seeds = val_seeds if split == "val" else train_seeds
            sample_set = sample_set_for(config, seeds)
    samples = sample_set.materialize()
    if not samples:
        raise ValueError(f"split {split!r} contains no samples")
    report = aggregate_reports(_eval_samples(model, samples,
                                             config.optim.batch_size))
    if out_dir is not None:
        from .reporting import write_report
        write_report(report, Path(out_dir))
    return report
