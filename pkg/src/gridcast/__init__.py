"""BEV grid forecasting: occupancy states, vehicle grids and backward scene
flow, coupled through flow-guided warping losses, with a synthetic world for
ground truth and a CPU-scale training harness."""

from .config import AblationSwitches, GeometryConfig, OptimConfig, RunConfig
from .geometry import GridGeometry, Pose, grid_frame_for
from .grids import (
    DetectionTarget,
    FrameTensor,
    FutureTarget,
    GeometryMismatchError,
    OccupancyStateGrid,
    SceneFlowGrid,
    SequenceSample,
    VehicleMaskGrid,
    VelocityGrid,
    compose_input_frame,
)
from .losses import LossReport, LossWeights
from .metrics import MetricReport, evaluate_bundle
from .model import BackboneConfig, GridcastModel, LatentDistribution, PredictionBundle
from .transforms import crop_and_resize, transform_grid
from .warp import WarpedSequence, warp_flow_grids, warp_grid, warp_once, warp_sequence
from .world import (
    AgentSpec,
    SceneScript,
    SensorModel,
    WorldConfig,
    build_sample,
    generate_scene,
    ground_truth_flow,
    render_frame,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
