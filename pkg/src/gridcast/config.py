"""Run configuration: one JSON-serializable object fully determines a run."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .losses import LossWeights
from .model import BackboneConfig
from .world import SensorModel, WorldConfig


@dataclass
class GeometryConfig:
    cells: int = 64
    resolution: float = 0.5

    def __post_init__(self):
        if self.cells < 1 or self.resolution <= 0:
            raise ValueError("geometry config must have positive cells and resolution")


@dataclass
class OptimConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 3e-7
    epochs: int = 20
    batch_size: int = 8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("invalid optimizer configuration")


@dataclass
class AblationSwitches:
    """Loss-term gating; warped losses additionally require detection and flow."""

    enable_det: bool = True
    enable_flow: bool = True
    enable_ogm: bool = True
    enable_warped_losses: bool = True

    def validate(self):
        if self.enable_warped_losses and not (self.enable_det and self.enable_flow):
            raise ValueError(
                "warped losses warp the detection grids with predicted flows, so they "
                "require both the detection and flow heads to be enabled")


@dataclass
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    sensor: SensorModel = field(default_factory=lambda: SensorModel(
        max_range=20.0, ray_count=1024, state_noise=0.05, dropout_rate=0.05,
        velocity_noise=0.2))
    num_history: int = 2
    num_future: int = 5
    step_seconds: float = 0.5
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    optim: OptimConfig = field(default_factory=OptimConfig)
    ablation: AblationSwitches = field(default_factory=AblationSwitches)
    seed: int = 0
    n_scenes: int = 65
    train_fraction: float = 0.8
    window_stride: float = 0.5
    v_static_thresh: float = 0.2
    threads: int = 0  # 0 = leave torch defaults alone
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.num_history < 1 or self.num_future < 1 or self.step_seconds <= 0:
            raise ValueError("invalid sequence configuration")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.geometry.cells % 4 != 0:
            raise ValueError("grid cells must be divisible by the encoder stride (4)")
        self.ablation.validate()
        if self.backbone.num_history != self.num_history:
            self.backbone.num_history = self.num_history
        if self.backbone.num_future != self.num_future:
            self.backbone.num_future = self.num_future
        if self.backbone.grid_size != self.geometry.cells:
            self.backbone.grid_size = self.geometry.cells

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @staticmethod
    def from_json(path: str | Path) -> "RunConfig":
        return config_from_dict(json.loads(Path(path).read_text()))


def paper_scale_config() -> RunConfig:
    """Published-scale preset: 240x240 grids at 0.25 m, full-width backbone.

    Retained for reference; far too heavy for CPU CI.
    """
    return RunConfig(
        geometry=GeometryConfig(cells=240, resolution=0.25),
        backbone=BackboneConfig.paper_scale(),
        optim=OptimConfig(learning_rate=3e-4, weight_decay=3e-7, epochs=20,
                          batch_size=18),
    )


def _build(cls, data):
    """Recursively build (possibly nested) dataclasses from plain dicts."""
    if data is None:
        return None
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        hint = hints.get(f.name)
        if dataclasses.is_dataclass(hint) and isinstance(value, dict):
            value = _build(hint, value)
        elif isinstance(value, list) and typing.get_origin(hint) is tuple:
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data)
