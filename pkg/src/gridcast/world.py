"""Deterministic synthetic BEV world: scenes, sensor-style rendering, targets.

A :class:`SceneScript` fully describes a small driving scene (static shapes,
agents with piecewise trajectories, the ego vehicle).  Everything derived from
it (input grids, occlusion, ground-truth targets) is a pure function of the
script and the call arguments, so repeated calls are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import shapely

from .geometry import GridGeometry, Pose, grid_frame_for
from .grids import (
    DetectionTarget,
    FutureTarget,
    OccupancyStateGrid,
    SceneFlowGrid,
    SequenceSample,
    VehicleMaskGrid,
    VelocityGrid,
    compose_input_frame,
)

VEHICLE = "vehicle"
PEDESTRIAN = "pedestrian"
CYCLIST = "cyclist"
AGENT_KINDS = (VEHICLE, PEDESTRIAN, CYCLIST)

#: Speed (m/s) separating the static and dynamic occupancy labels.
V_STATIC_THRESH = 0.2

_MAX_SPEED = 15.0
_TIME_KEY_QUANTUM = 1e-3  # seconds; used only to derive per-frame noise seeds


# ---------------------------------------------------------------------------
# trajectories and agents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySegment:
    """Constant-control motion piece: straight line, arc, or halt."""

    duration: float
    speed: float = 0.0
    yaw_rate: float = 0.0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment duration must be nonnegative")
        if not 0.0 <= self.speed <= _MAX_SPEED:
            raise ValueError(f"segment speed {self.speed} outside [0, {_MAX_SPEED}]")


def _advance(pose: Pose, seg: TrajectorySegment, s: float) -> Pose:
    if abs(seg.yaw_rate) < 1e-9:
        return Pose(pose.x + seg.speed * s * math.cos(pose.heading),
                    pose.y + seg.speed * s * math.sin(pose.heading),
                    pose.heading)
    theta = pose.heading + seg.yaw_rate * s
    radius = seg.speed / seg.yaw_rate
    return Pose(pose.x + radius * (math.sin(theta) - math.sin(pose.heading)),
                pose.y - radius * (math.cos(theta) - math.cos(pose.heading)),
                theta)


@dataclass(frozen=True)
class AgentSpec:
    """Rectangular agent with a piecewise constant-control trajectory."""

    kind: str
    length: float
    width: float
    initial_pose: Pose
    segments: tuple[TrajectorySegment, ...]

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.kind == VEHICLE and (self.length < 3.5 or self.width < 1.6):
            raise ValueError("vehicle footprints must be at least 3.5 x 1.6 m")
        if self.kind == PEDESTRIAN and (self.length > 0.8 or self.width > 0.8):
            raise ValueError("pedestrian footprints must be at most 0.8 x 0.8 m")
        if not self.segments:
            raise ValueError("agent needs at least one trajectory segment")

    @cached_property
    def _boundaries(self) -> tuple[tuple[float, Pose], ...]:
        out = [(0.0, self.initial_pose)]
        t, pose = 0.0, self.initial_pose
        for seg in self.segments:
            pose = _advance(pose, seg, seg.duration)
            t += seg.duration
            out.append((t, pose))
        return tuple(out)

    def _locate(self, t: float) -> tuple[Pose, TrajectorySegment | None, float]:
        if t < 0.0:
            return self.initial_pose, None, 0.0
        bounds = self._boundaries
        for i, seg in enumerate(self.segments):
            if t < bounds[i + 1][0]:
                return bounds[i][1], seg, t - bounds[i][0]
        # Beyond the trajectory the agent is parked at its final pose.
        return bounds[-1][1], None, 0.0

    def pose_at(self, t: float) -> Pose:
        pose0, seg, s = self._locate(t)
        if seg is None:
            return pose0
        return _advance(pose0, seg, s)

    def speed_at(self, t: float) -> float:
        """Instantaneous speed; zero before the start and beyond the end."""
        _, seg, _ = self._locate(t)
        return 0.0 if seg is None else seg.speed

    def velocity_at(self, t: float) -> np.ndarray:
        pose = self.pose_at(t)
        v = self.speed_at(t)
        return np.array([v * math.cos(pose.heading), v * math.sin(pose.heading)])

    def footprint_at(self, t: float) -> np.ndarray:
        """4x2 world-frame corner array (CCW) of the rectangle at time t."""
        pose = self.pose_at(t)
        hl, hw = self.length / 2.0, self.width / 2.0
        corners = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        return pose.transform_points(corners)

    def covers(self, points: np.ndarray, t: float) -> np.ndarray:
        """Boolean mask of world points whose center lies in the footprint."""
        pose = self.pose_at(t)
        local = pose.inverse_transform_points(points)
        return ((np.abs(local[..., 0]) <= self.length / 2.0)
                & (np.abs(local[..., 1]) <= self.width / 2.0))


def straight(duration: float, speed: float) -> TrajectorySegment:
    return TrajectorySegment(duration=duration, speed=speed)


def turn(duration: float, speed: float, yaw_rate: float) -> TrajectorySegment:
    return TrajectorySegment(duration=duration, speed=speed, yaw_rate=yaw_rate)


def halt(duration: float) -> TrajectorySegment:
    return TrajectorySegment(duration=duration, speed=0.0)


def stop_and_go(total: float, speed: float, stop_every: float, stop_for: float
                ) -> tuple[TrajectorySegment, ...]:
    """Alternating drive/halt segments covering ``total`` seconds."""
    segs, t = [], 0.0
    while t < total:
        drive = min(stop_every, total - t)
        segs.append(straight(drive, speed))
        t += drive
        if t < total:
            pause = min(stop_for, total - t)
            segs.append(halt(pause))
            t += pause
    return tuple(segs)


# ---------------------------------------------------------------------------
# scene script and sensor
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SceneScript:
    """Complete ground-truth description of one synthetic scene."""

    static_shapes: tuple[np.ndarray, ...]  # each (k, 2) world-frame polygon
    agents: tuple[AgentSpec, ...]
    ego: AgentSpec
    duration: float
    seed: int

    def to_dict(self) -> dict:
        def agent_dict(a: AgentSpec) -> dict:
            return {
                "kind": a.kind, "length": a.length, "width": a.width,
                "initial_pose": a.initial_pose.to_list(),
                "segments": [[s.duration, s.speed, s.yaw_rate] for s in a.segments],
            }
        return {
            "static_shapes": [np.asarray(p).tolist() for p in self.static_shapes],
            "agents": [agent_dict(a) for a in self.agents],
            "ego": agent_dict(self.ego),
            "duration": self.duration,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "SceneScript":
        def agent(d: dict) -> AgentSpec:
            return AgentSpec(
                kind=d["kind"], length=d["length"], width=d["width"],
                initial_pose=Pose(*d["initial_pose"]),
                segments=tuple(TrajectorySegment(*s) for s in d["segments"]),
            )
        return SceneScript(
            static_shapes=tuple(np.asarray(p, dtype=float) for p in data["static_shapes"]),
            agents=tuple(agent(a) for a in data["agents"]),
            ego=agent(data["ego"]),
            duration=float(data["duration"]),
            seed=int(data["seed"]),
        )


@dataclass(frozen=True)
class SensorModel:
    """Emulates grid-filter uncertainty: range, occlusion, noise, dropout.

    ``ray_count`` is the number of discrete beams; cells whose azimuth falls
    between beams at long range read as unknown.  ``ray_count = 0`` disables
    the beam quantization (a continuous sensor).
    """

    max_range: float = 22.0
    ray_count: int = 1024
    state_noise: float = 0.0
    dropout_rate: float = 0.0
    velocity_noise: float = 0.0

    def __post_init__(self):
        if min(self.max_range, self.ray_count, self.state_noise,
               self.dropout_rate, self.velocity_noise) < 0:
            raise ValueError("sensor parameters must be nonnegative")
        if self.dropout_rate > 1.0:
            raise ValueError("dropout_rate must be at most 1")

    def noiseless(self) -> "SensorModel":
        return replace(self, state_noise=0.0, dropout_rate=0.0, velocity_noise=0.0)


def _frame_rng(script: SceneScript, t: float, salt: int) -> np.random.Generator:
    return np.random.default_rng([script.seed & 0x7FFFFFFF,
                                  int(round(t / _TIME_KEY_QUANTUM)) & 0x7FFFFFFF, salt])


# ---------------------------------------------------------------------------
# scene generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WorldConfig:
    """Parameters of the random desk-scale world."""

    extent_m: float = 30.0
    duration: float = 8.0
    n_vehicles: int = 3
    n_pedestrians: int = 3
    n_cyclists: int = 1
    n_static_shapes: int = 4
    vehicle_speed: tuple[float, float] = (1.0, 2.6)
    parked_fraction: float = 0.25
    pedestrian_speed: tuple[float, float] = (0.5, 1.3)
    cyclist_speed: tuple[float, float] = (1.0, 2.4)
    ego_speed: tuple[float, float] = (0.0, 1.2)
    turn_fraction: float = 0.3
    max_yaw_rate: float = 0.3
    static_size: tuple[float, float] = (2.0, 8.0)
    max_place_tries: int = 300

    def __post_init__(self):
        if self.extent_m <= 0 or self.duration <= 0:
            raise ValueError("extent and duration must be positive")
        if min(self.n_vehicles, self.n_pedestrians, self.n_cyclists,
               self.n_static_shapes) < 0:
            raise ValueError("counts must be nonnegative")


def _rect_polygon(cx: float, cy: float, length: float, width: float,
                  angle: float) -> np.ndarray:
    hl, hw = length / 2.0, width / 2.0
    corners = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return corners @ rot.T + np.array([cx, cy])


def _polys_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(shapely.intersects(shapely.Polygon(a), shapely.Polygon(b)))


def _sample_segments(rng: np.random.Generator, cfg: WorldConfig, kind: str,
                     duration: float) -> tuple[TrajectorySegment, ...]:
    lo, hi = {VEHICLE: cfg.vehicle_speed, PEDESTRIAN: cfg.pedestrian_speed,
              CYCLIST: cfg.cyclist_speed}[kind]
    speed = float(rng.uniform(lo, hi))
    style = rng.random()
    if kind == VEHICLE and style < cfg.turn_fraction:
        t1 = float(rng.uniform(0.2, 0.5)) * duration
        t2 = float(rng.uniform(0.2, 0.4)) * duration
        rate = float(rng.uniform(0.1, cfg.max_yaw_rate)) * (1 if rng.random() < 0.5 else -1)
        return (straight(t1, speed), turn(t2, speed, rate),
                straight(duration - t1 - t2 + 1.0, speed))
    if kind == VEHICLE and style > 0.85:
        return stop_and_go(duration + 1.0, speed, stop_every=duration / 2.5,
                           stop_for=duration / 4.0)
    return (straight(duration + 1.0, speed),)


def _sample_agent(rng: np.random.Generator, cfg: WorldConfig, kind: str,
                  parked: bool) -> AgentSpec:
    half = cfg.extent_m / 2.0 - 2.0
    pose = Pose(float(rng.uniform(-half, half)), float(rng.uniform(-half, half)),
                float(rng.uniform(-math.pi, math.pi)))
    if kind == VEHICLE:
        size = (float(rng.uniform(3.8, 5.2)), float(rng.uniform(1.7, 2.1)))
    elif kind == PEDESTRIAN:
        size = (float(rng.uniform(0.5, 0.8)), float(rng.uniform(0.5, 0.8)))
    else:
        size = (float(rng.uniform(1.6, 2.0)), float(rng.uniform(0.5, 0.8)))
    if parked:
        segments = (halt(cfg.duration + 1.0),)
    else:
        segments = _sample_segments(rng, cfg, kind, cfg.duration)
    return AgentSpec(kind=kind, length=size[0], width=size[1],
                     initial_pose=pose, segments=segments)


def _trajectory_clear(agent: AgentSpec, statics: list[np.ndarray], duration: float,
                      check_step: float = 0.5) -> bool:
    times = np.arange(0.0, duration + 1e-9, check_step)
    for t in times:
        fp = shapely.Polygon(agent.footprint_at(float(t)))
        for poly in statics:
            if shapely.intersects(fp, shapely.Polygon(poly)):
                return False
    return True


def generate_scene(seed: int, config: WorldConfig | None = None) -> SceneScript:
    """Sample a reproducible scene: same seed and config give identical scripts."""
    cfg = config or WorldConfig()
    rng = np.random.default_rng(seed)
    half = cfg.extent_m / 2.0

    statics: list[np.ndarray] = []
    for _ in range(cfg.n_static_shapes):
        for _ in range(cfg.max_place_tries):
            poly = _rect_polygon(
                float(rng.uniform(-half, half)), float(rng.uniform(-half, half)),
                float(rng.uniform(*cfg.static_size)), float(rng.uniform(*cfg.static_size)),
                float(rng.uniform(-math.pi, math.pi)))
            # Keep the center strip clear so the ego always has room.
            if np.min(np.hypot(poly[:, 0], poly[:, 1])) < 4.0:
                continue
            if all(not _polys_intersect(poly, other) for other in statics):
                statics.append(poly)
                break
        else:
            raise RuntimeError(f"could not place static shape (seed={seed})")

    ego = None
    for _ in range(cfg.max_place_tries):
        speed = float(rng.uniform(*cfg.ego_speed))
        candidate = AgentSpec(
            kind=VEHICLE, length=4.2, width=1.8,
            initial_pose=Pose(0.0, 0.0, float(rng.uniform(-math.pi, math.pi))),
            segments=(straight(cfg.duration + 1.0, speed),))
        if _trajectory_clear(candidate, statics, cfg.duration):
            ego = candidate
            break
    if ego is None:
        raise RuntimeError(f"could not find a collision-free ego trajectory (seed={seed})")

    agents: list[AgentSpec] = []
    kinds = ([VEHICLE] * cfg.n_vehicles + [PEDESTRIAN] * cfg.n_pedestrians
             + [CYCLIST] * cfg.n_cyclists)
    for kind in kinds:
        placed = False
        for _ in range(cfg.max_place_tries):
            parked = kind == VEHICLE and rng.random() < cfg.parked_fraction
            cand = _sample_agent(rng, cfg, kind, parked)
            fp = cand.footprint_at(0.0)
            blockers = [a.footprint_at(0.0) for a in agents] + [ego.footprint_at(0.0)]
            if any(_polys_intersect(fp, other) for other in blockers + statics):
                continue
            if not _trajectory_clear(cand, statics, cfg.duration):
                continue
            agents.append(cand)
            placed = True
            break
        if not placed:
            raise RuntimeError(
                f"could not place {kind} without overlap after "
                f"{cfg.max_place_tries} tries (seed={seed})")

    return SceneScript(static_shapes=tuple(statics), agents=tuple(agents),
                       ego=ego, duration=cfg.duration, seed=seed)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _segments_cross(origin: np.ndarray, targets: np.ndarray,
                    edges: np.ndarray) -> np.ndarray:
    """(M, E) booleans: does segment origin->target properly cross each edge?"""
    a = origin[None, None, :]
    b = targets[:, None, :]
    c = edges[None, :, 0, :]
    d = edges[None, :, 1, :]

    def cross(p, q, r):
        return ((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))

    d1 = cross(c, d, a)
    d2 = cross(c, d, b)
    d3 = cross(a, b, c)
    d4 = cross(a, b, d)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _poly_edges(poly: np.ndarray) -> np.ndarray:
    return np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)


def _visible_mask(script: SceneScript, t: float, sensor: SensorModel,
                  geometry: GridGeometry) -> np.ndarray:
    """Cells the sensor can observe from the ego pose at time t."""
    centers = geometry.cell_centers_world().reshape(-1, 2)
    ego_xy = np.array([script.ego.pose_at(t).x, script.ego.pose_at(t).y])
    delta = centers - ego_xy
    dist = np.hypot(delta[:, 0], delta[:, 1])
    visible = dist <= sensor.max_range

    if sensor.ray_count > 0:
        spacing = 2.0 * math.pi / sensor.ray_count
        azimuth = np.arctan2(delta[:, 1], delta[:, 0])
        beam_offset = np.abs((azimuth + spacing / 2.0) % spacing - spacing / 2.0)
        half_width = np.arctan2(geometry.resolution / 2.0, np.maximum(dist, 1e-9))
        visible &= beam_offset <= half_width + 1e-12

    # Occlusion: obstacles are static shapes plus all non-ego agent footprints.
    # An obstacle never occludes its own cells (its surface is what is sensed).
    obstacles = [np.asarray(p, dtype=float) for p in script.static_shapes]
    inside = [shapely.contains_xy(shapely.Polygon(p), centers[:, 0], centers[:, 1])
              for p in obstacles]
    for agent in script.agents:
        obstacles.append(agent.footprint_at(t))
        inside.append(agent.covers(centers, t))
    for poly, own in zip(obstacles, inside):
        hits = _segments_cross(ego_xy, centers, _poly_edges(poly)).any(axis=1)
        visible &= own | ~hits
    return visible.reshape(geometry.shape)


def render_frame(script: SceneScript, t: float, sensor: SensorModel,
                 geometry: GridGeometry, v_static_thresh: float = V_STATIC_THRESH
                 ) -> tuple[OccupancyStateGrid, VelocityGrid, VehicleMaskGrid]:
    """Render the sensed occupancy state, velocities and vehicle mask at time t.

    The ego vehicle is excluded from every grid.  Cells outside sensor
    coverage or shadowed by obstacles read unknown; dynamic cells carry the
    true agent velocity expressed in grid-local axes, plus sensor noise.
    """
    if not 0.0 <= t <= script.duration:
        raise ValueError(f"time {t} outside scene duration [0, {script.duration}]")
    centers = geometry.cell_centers_world().reshape(-1, 2)
    shape = geometry.shape

    stat = np.zeros(len(centers), dtype=bool)
    dyn = np.zeros(len(centers), dtype=bool)
    veh = np.zeros(len(centers), dtype=bool)
    vx = np.zeros(len(centers))
    vy = np.zeros(len(centers))

    for poly in script.static_shapes:
        stat |= shapely.contains_xy(shapely.Polygon(np.asarray(poly, dtype=float)),
                                    centers[:, 0], centers[:, 1])

    grid_rot = geometry.origin_pose.rotation
    for agent in script.agents:
        cover = agent.covers(centers, t)
        moving = agent.speed_at(t) > v_static_thresh
        if moving:
            dyn |= cover
            v_local = grid_rot.T @ agent.velocity_at(t)
            vx[cover] = v_local[0]
            vy[cover] = v_local[1]
        else:
            stat |= cover
        if agent.kind == VEHICLE:
            veh |= cover

    visible = _visible_mask(script, t, sensor, geometry).reshape(-1)
    dyn &= visible
    stat &= visible & ~dyn
    unknown = ~visible

    unk_p = unknown.astype(np.float64)
    stat_p = stat.astype(np.float64)
    dyn_p = dyn.astype(np.float64)
    veh_p = veh.astype(np.float64)
    vx[dyn_p == 0] = 0.0
    vy[dyn_p == 0] = 0.0

    rng = _frame_rng(script, t, salt=101)
    if sensor.dropout_rate > 0:
        occupied = (stat_p + dyn_p) > 0
        drop = occupied & (rng.random(len(centers)) < sensor.dropout_rate)
        stat_p[drop] = 0.0
        dyn_p[drop] = 0.0
        unk_p[drop] = 1.0
        vx[drop] = 0.0
        vy[drop] = 0.0
        veh_drop = (veh_p > 0) & (rng.random(len(centers)) < sensor.dropout_rate)
        veh_p[veh_drop] = 0.0
    if sensor.state_noise > 0:
        for arr in (unk_p, stat_p, dyn_p, veh_p):
            arr += rng.normal(0.0, sensor.state_noise, len(centers))
            np.clip(arr, 0.0, 1.0, out=arr)
        total = unk_p + stat_p + dyn_p
        over = total > 1.0
        for arr in (unk_p, stat_p, dyn_p):
            arr[over] /= total[over]
    if sensor.velocity_noise > 0:
        noisy = dyn_p > 0
        vx[noisy] += rng.normal(0.0, sensor.velocity_noise, int(noisy.sum()))
        vy[noisy] += rng.normal(0.0, sensor.velocity_noise, int(noisy.sum()))

    occ = OccupancyStateGrid(unk=unk_p.reshape(shape), stat=stat_p.reshape(shape),
                             dyn=dyn_p.reshape(shape), geometry=geometry)
    vel = VelocityGrid(vx=vx.reshape(shape), vy=vy.reshape(shape), geometry=geometry)
    mask = VehicleMaskGrid(prob=veh_p.reshape(shape), geometry=geometry)
    return occ, vel, mask


def ground_truth_flow(script: SceneScript, t: float, step: float,
                      geometry: GridGeometry) -> SceneFlowGrid:
    """Backward centroid flow at time t, in cells per step.

    Each moving agent contributes one rigid vector (its centroid displacement
    from t back to t-step, in pixel axes) on the union of its footprints at t
    and t-step.  Covering both footprints lets the warp clear the cells the
    agent just left; all remaining cells are zero.
    """
    if not (0.0 <= t - step and t <= script.duration):
        raise ValueError(f"flow window [{t - step}, {t}] outside scene duration")
    centers = geometry.cell_centers_world().reshape(-1, 2)
    fx = np.zeros(len(centers))
    fy = np.zeros(len(centers))
    for agent in script.agents:
        pose_now, pose_prev = agent.pose_at(t), agent.pose_at(t - step)
        if math.hypot(pose_now.x - pose_prev.x, pose_now.y - pose_prev.y) < 1e-9:
            continue
        pix = geometry.world_to_pixel(np.array([[pose_now.x, pose_now.y],
                                                [pose_prev.x, pose_prev.y]]))
        vec = pix[1] - pix[0]
        support = agent.covers(centers, t) | agent.covers(centers, t - step)
        fx[support] = vec[0]
        fy[support] = vec[1]
    return SceneFlowGrid(fx=fx.reshape(geometry.shape), fy=fy.reshape(geometry.shape),
                         geometry=geometry)


def vehicle_mask_exact(script: SceneScript, t: float, geometry: GridGeometry
                       ) -> VehicleMaskGrid:
    """Annotation-style vehicle mask: exact footprints, ego excluded."""
    centers = geometry.cell_centers_world().reshape(-1, 2)
    mask = np.zeros(len(centers), dtype=bool)
    for agent in script.agents:
        if agent.kind == VEHICLE:
            mask |= agent.covers(centers, t)
    return VehicleMaskGrid(prob=mask.reshape(geometry.shape).astype(np.float32),
                           geometry=geometry)


def dynamic_class_masks(script: SceneScript, t: float, geometry: GridGeometry,
                        v_static_thresh: float = V_STATIC_THRESH
                        ) -> dict[str, np.ndarray]:
    """Binary per-class masks of cells covered by moving agents at time t."""
    centers = geometry.cell_centers_world().reshape(-1, 2)
    masks = {kind: np.zeros(len(centers), dtype=bool) for kind in AGENT_KINDS}
    for agent in script.agents:
        if agent.speed_at(t) > v_static_thresh:
            masks[agent.kind] |= agent.covers(centers, t)
    return {k: m.reshape(geometry.shape).astype(np.float32) for k, m in masks.items()}


def two_futures_scripts(seed: int = 0, speed: float = 2.0, yaw_rate: float = 0.5,
                        branch_time: float = 1.5, duration: float = 6.0
                        ) -> tuple[SceneScript, SceneScript]:
    """Two scripts identical up to ``branch_time``: go straight, or turn.

    Used to probe whether distinct latent samples can express distinct
    plausible futures.  The ego is parked so both scripts share one reference
    frame, and the single vehicle either keeps its heading or turns left.
    """
    ego = AgentSpec(kind=VEHICLE, length=4.2, width=1.8,
                    initial_pose=Pose(0.0, -6.0, math.pi / 2.0),
                    segments=(halt(duration + 1.0),))
    start = Pose(-8.0, 0.0, 0.0)
    before = straight(branch_time, speed)
    tail = duration - branch_time + 1.0
    scripts = []
    for segments in ((before, straight(tail, speed)),
                     (before, turn(tail, speed, yaw_rate))):
        agent = AgentSpec(kind=VEHICLE, length=4.4, width=1.9,
                          initial_pose=start, segments=segments)
        scripts.append(SceneScript(static_shapes=(), agents=(agent,), ego=ego,
                                   duration=duration, seed=seed))
    return scripts[0], scripts[1]


def build_sample(script: SceneScript, t: float, num_history: int, num_future: int,
                 step: float, sensor: SensorModel, geometry_like: GridGeometry,
                 v_static_thresh: float = V_STATIC_THRESH) -> SequenceSample:
    """Assemble one training window in the fixed reference frame at time t.

    History frames carry sensor noise; all targets are rendered noiselessly.
    Future visibility follows the scripted future ego pose, so the unknown
    channel evolves with ego motion.
    """
    if t - num_history * step < 0 or t + num_future * step > script.duration:
        raise ValueError(
            f"window [{t - num_history * step}, {t + num_future * step}] outside "
            f"scene duration [0, {script.duration}]")
    reference = script.ego.pose_at(t)
    geometry = grid_frame_for(reference, geometry_like.width, geometry_like.height,
                              geometry_like.resolution)
    clean = sensor.noiseless()

    history = []
    for i in range(num_history, -1, -1):
        ti = t - i * step
        occ, vel, veh = render_frame(script, ti, sensor, geometry, v_static_thresh)
        history.append(compose_input_frame(occ, vel, veh, timestamp=ti))

    occ0, _, _ = render_frame(script, t, clean, geometry, v_static_thresh)
    detection = DetectionTarget(veh=vehicle_mask_exact(script, t, geometry),
                                dyn=(occ0.dyn > 0.5).astype(np.float32))

    future = []
    class_masks = [dynamic_class_masks(script, t, geometry, v_static_thresh)]
    for tau in range(1, num_future + 1):
        tt = t + tau * step
        occ, _, _ = render_frame(script, tt, clean, geometry, v_static_thresh)
        future.append(FutureTarget(
            veh=vehicle_mask_exact(script, tt, geometry),
            flow=ground_truth_flow(script, tt, step, geometry),
            ogm=occ,
        ))
        class_masks.append(dynamic_class_masks(script, tt, geometry, v_static_thresh))

    return SequenceSample(history=history, gt_detection=detection, gt_future=future,
                          reference_pose=reference, dyn_class_masks=class_masks)
