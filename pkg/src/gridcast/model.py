"""Spatiotemporal forecasting network.

Pipeline: a shared spatial encoder per input frame, a ConvLSTM stack over the
history, a pair of diagonal-Gaussian latent heads (one conditioned on history
only, one also on the ground-truth future), a convolutional-GRU rollout over
the horizon, and three decoder heads (detection, vehicle+flow prediction,
occupancy states).  Warped occupancy sequences are produced inside ``forward``
by recursively warping the detection grids with the predicted flows.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .warp import warp_sequence

LOGVAR_CLAMP = 10.0


@dataclass
class BackboneConfig:
    """Network sizing.  The defaults are the desk-scale preset."""

    in_channels: int = 6
    encoder_channels: tuple[int, int] = (16, 32)
    hidden_channels: int = 32
    recurrent_depth: int = 2
    gru_depth: int = 2
    latent_dim: int = 32
    num_history: int = 2
    num_future: int = 5
    grid_size: int = 64

    def __post_init__(self):
        values = (self.in_channels, *self.encoder_channels, self.hidden_channels,
                  self.recurrent_depth, self.gru_depth, self.latent_dim,
                  self.num_history, self.num_future, self.grid_size)
        if any(int(v) != v or v < 1 for v in values):
            raise ValueError("backbone config fields must be positive integers")
        if self.grid_size % 4 != 0:
            raise ValueError("grid size must be divisible by the encoder stride (4)")

    @staticmethod
    def paper_scale() -> "BackboneConfig":
        return BackboneConfig(encoder_channels=(64, 128), hidden_channels=128,
                              recurrent_depth=4, gru_depth=3, grid_size=240)


@dataclass
class HiddenState:
    """Recurrent context: feature map and cell memory at encoder resolution."""

    feature: torch.Tensor
    memory: torch.Tensor


@dataclass
class LatentDistribution:
    """Diagonal Gaussian over the scene latent."""

    mean: torch.Tensor        # (B, D)
    log_variance: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_variance.shape:
            raise ValueError("latent mean and log-variance shapes differ")

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def sample(self) -> torch.Tensor:
        std = torch.exp(0.5 * self.log_variance)
        return self.mean + std * torch.randn_like(std)


@dataclass
class PredictionBundle:
    """All decoder outputs: probabilities from sigmoid heads, flow unbounded.

    Shapes: ``det (B, 2, h, w)``, ``pred (B, T, 3, h, w)`` with channels
    (vehicle, flow_x, flow_y), ``ogm (B, T, 3, h, w)`` with channels
    (unknown, static, dynamic).
    """

    det: torch.Tensor
    pred: torch.Tensor
    ogm: torch.Tensor

    @property
    def det_veh(self) -> torch.Tensor:
        return self.det[:, 0]

    @property
    def det_dyn(self) -> torch.Tensor:
        return self.det[:, 1]

    @property
    def veh(self) -> torch.Tensor:
        return self.pred[:, :, 0]

    @property
    def flow(self) -> torch.Tensor:
        return self.pred[:, :, 1:3]

    @property
    def ogm_unk(self) -> torch.Tensor:
        return self.ogm[:, :, 0]

    @property
    def ogm_stat(self) -> torch.Tensor:
        return self.ogm[:, :, 1]

    @property
    def ogm_dyn(self) -> torch.Tensor:
        return self.ogm[:, :, 2]


@dataclass
class ForwardResult:
    bundle: PredictionBundle
    present: LatentDistribution
    future: LatentDistribution | None
    z: torch.Tensor
    warped_veh: torch.Tensor  # (B, T, h, w)
    warped_dyn: torch.Tensor


def _conv(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1),
        nn.GroupNorm(min(8, cout), cout),
        nn.ReLU(inplace=True),
    )


def _deconv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1),
        nn.GroupNorm(min(8, cout), cout),
        nn.ReLU(inplace=True),
    )


class SpatialEncoder(nn.Module):
    """Shared per-frame encoder; returns quarter-resolution features and skips."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        c0, c1 = cfg.encoder_channels
        self.stem = _conv(cfg.in_channels, c0)
        self.down1 = nn.Sequential(_conv(c0, c0, stride=2), _conv(c0, c1))
        self.down2 = nn.Sequential(_conv(c1, c1, stride=2), _conv(c1, cfg.hidden_channels))

    def forward(self, x: torch.Tensor):
        full = self.stem(x)
        half = self.down1(full)
        quarter = self.down2(half)
        return quarter, (full, half)


class ConvLSTMCell(nn.Module):
    def __init__(self, in_ch: int, hidden_ch: int):
        super().__init__()
        self.hidden_ch = hidden_ch
        self.gates = nn.Conv2d(in_ch + hidden_ch, 4 * hidden_ch, 3, padding=1)

    def forward(self, x, h, c):
        i, f, g, o = torch.chunk(self.gates(torch.cat([x, h], dim=1)), 4, dim=1)
        c_next = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h_next = torch.sigmoid(o) * torch.tanh(c_next)
        return h_next, c_next


class ConvGRUCell(nn.Module):
    def __init__(self, in_ch: int, hidden_ch: int):
        super().__init__()
        self.hidden_ch = hidden_ch
        self.gates = nn.Conv2d(in_ch + hidden_ch, 2 * hidden_ch, 3, padding=1)
        self.candidate = nn.Conv2d(in_ch + hidden_ch, hidden_ch, 3, padding=1)

    def forward(self, x, h):
        r, u = torch.chunk(torch.sigmoid(self.gates(torch.cat([x, h], dim=1))), 2, dim=1)
        n = torch.tanh(self.candidate(torch.cat([x, r * h], dim=1)))
        return (1 - u) * n + u * h


class RolloutCell(nn.Module):
    """Stack of convolutional GRUs plus a residual unit, stepped over the horizon."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        ch = cfg.hidden_channels
        first_in = ch + cfg.latent_dim
        self.grus = nn.ModuleList(
            [ConvGRUCell(first_in if i == 0 else ch, ch) for i in range(cfg.gru_depth)])
        self.residual = nn.Sequential(
            nn.Conv2d(ch, ch, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(ch, ch, 3, padding=1))

    def init_states(self, like: torch.Tensor) -> list[torch.Tensor]:
        return [torch.zeros_like(like) for _ in self.grus]

    def forward(self, prev_h: torch.Tensor, z_map: torch.Tensor,
                states: list[torch.Tensor]):
        x = torch.cat([prev_h, z_map], dim=1)
        new_states = []
        for i, gru in enumerate(self.grus):
            s = gru(x, states[i])
            new_states.append(s)
            x = s
        out = x + self.residual(x)
        return out, new_states


class DistributionHead(nn.Module):
    """Pools a feature map down to a diagonal Gaussian over the latent."""

    def __init__(self, in_ch: int, latent_dim: int):
        super().__init__()
        self.reduce = nn.Sequential(_conv(in_ch, in_ch, stride=2),
                                    _conv(in_ch, in_ch, stride=2))
        self.head = nn.Sequential(
            nn.Linear(in_ch, in_ch), nn.ReLU(inplace=True),
            nn.Linear(in_ch, 2 * latent_dim))
        self.latent_dim = latent_dim

    def forward(self, feature: torch.Tensor) -> LatentDistribution:
        pooled = self.reduce(feature).mean(dim=(-1, -2))
        params = self.head(pooled)
        mean, logvar = torch.chunk(params, 2, dim=-1)
        return LatentDistribution(mean=mean,
                                  log_variance=logvar.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP))


class FutureEncoder(nn.Module):
    """Encodes ground-truth future vehicle and flow grids for the future latent."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        ch = cfg.hidden_channels
        self.net = nn.Sequential(
            _conv(3 * cfg.num_future, ch, stride=2),
            _conv(ch, ch, stride=2),
            _conv(ch, ch, stride=2),
        )
        self.head = nn.Sequential(
            nn.Linear(2 * ch, ch), nn.ReLU(inplace=True),
            nn.Linear(ch, 2 * cfg.latent_dim))

    def forward(self, context: torch.Tensor, future_veh: torch.Tensor,
                future_flow: torch.Tensor) -> LatentDistribution:
        b, t = future_veh.shape[:2]
        stacked = torch.cat([future_veh.unsqueeze(2), future_flow], dim=2)
        stacked = stacked.reshape(b, t * 3, *future_veh.shape[-2:])
        pooled = self.net(stacked).mean(dim=(-1, -2))
        ctx = context.mean(dim=(-1, -2))
        mean, logvar = torch.chunk(self.head(torch.cat([pooled, ctx], dim=-1)), 2, dim=-1)
        return LatentDistribution(mean=mean,
                                  log_variance=logvar.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP))


class DetectionHead(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        c0, c1 = cfg.encoder_channels
        self.net = nn.Sequential(
            _deconv(cfg.hidden_channels, c1), _deconv(c1, c0),
            nn.Conv2d(c0, 2, 3, padding=1))

    def forward(self, h1: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(h1))


class PredictionHead(nn.Module):
    """Per-step vehicle probability and two linear flow channels."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        c0, c1 = cfg.encoder_channels
        self.net = nn.Sequential(
            _deconv(cfg.hidden_channels, c1), _deconv(c1, c0),
            nn.Conv2d(c0, 3, 3, padding=1))

    def forward(self, h_tau: torch.Tensor) -> torch.Tensor:
        out = self.net(h_tau)
        veh = torch.sigmoid(out[:, 0:1])
        return torch.cat([veh, out[:, 1:3]], dim=1)


class OgmHead(nn.Module):
    """Occupancy-state decoder fusing skip features from the spatial encoder."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        c0, c1 = cfg.encoder_channels
        self.up1 = _deconv(cfg.hidden_channels, c1)
        self.fuse1 = _conv(2 * c1, c1)
        self.up2 = _deconv(c1, c0)
        self.fuse2 = _conv(2 * c0, c0)
        self.out = nn.Conv2d(c0, 3, 3, padding=1)

    def forward(self, h_tau: torch.Tensor, skips) -> torch.Tensor:
        full, half = skips
        x = self.fuse1(torch.cat([self.up1(h_tau), half], dim=1))
        x = self.fuse2(torch.cat([self.up2(x), full], dim=1))
        return torch.sigmoid(self.out(x))


class GridcastModel(nn.Module):
    """Full multi-head forecaster; see the module docstring for the pipeline."""

    def __init__(self, config: BackboneConfig | None = None):
        super().__init__()
        self.config = config or BackboneConfig()
        cfg = self.config
        self.encoder = SpatialEncoder(cfg)
        self.temporal = nn.ModuleList([
            ConvLSTMCell(cfg.hidden_channels, cfg.hidden_channels)
            for _ in range(cfg.recurrent_depth)])
        self.present_head = DistributionHead(cfg.hidden_channels, cfg.latent_dim)
        self.future_head = FutureEncoder(cfg)
        self.rollout_cell = RolloutCell(cfg)
        self.det_head = DetectionHead(cfg)
        self.pred_head = PredictionHead(cfg)
        self.ogm_head = OgmHead(cfg)

    # --- pipeline stages ---------------------------------------------------

    def encode_history(self, history: torch.Tensor):
        """(B, N+1, 6, h, w) -> (HiddenState, skip features of the last frame)."""
        expected = self.config.num_history + 1
        if history.ndim != 5 or history.shape[1] != expected:
            raise ValueError(f"expected history of {expected} frames, got "
                             f"{tuple(history.shape)}")
        b, s = history.shape[:2]
        frames = history.reshape(b * s, *history.shape[2:])
        encoded, (full, half) = self.encoder(frames)
        encoded = encoded.reshape(b, s, *encoded.shape[1:])
        skips = (full.reshape(b, s, *full.shape[1:])[:, -1],
                 half.reshape(b, s, *half.shape[1:])[:, -1])

        h = [torch.zeros_like(encoded[:, 0]) for _ in self.temporal]
        c = [torch.zeros_like(encoded[:, 0]) for _ in self.temporal]
        for step in range(s):
            x = encoded[:, step]
            for layer, cell in enumerate(self.temporal):
                h[layer], c[layer] = cell(x, h[layer], c[layer])
                x = h[layer]
        return HiddenState(feature=h[-1], memory=c[-1]), skips

    def latent_distributions(self, context: HiddenState,
                             future_veh: torch.Tensor | None = None,
                             future_flow: torch.Tensor | None = None):
        present = self.present_head(context.feature)
        future = None
        if future_veh is not None or future_flow is not None:
            if future_veh is None or future_flow is None:
                raise ValueError("future conditioning needs both vehicle and flow grids")
            future = self.future_head(context.feature, future_veh, future_flow)
        return present, future

    def rollout_future(self, context: HiddenState, z: torch.Tensor,
                       steps: int | None = None) -> list[torch.Tensor]:
        """Autoregressive hidden states for each future step, conditioned on z."""
        steps = self.config.num_future if steps is None else steps
        if steps < 1:
            raise ValueError("rollout needs at least one step")
        z_map = z[:, :, None, None].expand(-1, -1, *context.feature.shape[-2:])
        states = self.rollout_cell.init_states(context.feature)
        h = context.feature
        out = []
        for _ in range(steps):
            h, states = self.rollout_cell(h, z_map, states)
            out.append(h)
        return out

    def decode_bundle(self, future_hidden: list[torch.Tensor], skips) -> PredictionBundle:
        if skips is None:
            raise ValueError("decode_bundle requires encoder skip features")
        det = self.det_head(future_hidden[0])
        pred = torch.stack([self.pred_head(h) for h in future_hidden], dim=1)
        ogm = torch.stack([self.ogm_head(h, skips) for h in future_hidden], dim=1)
        return PredictionBundle(det=det, pred=pred, ogm=ogm)

    def forward(self, batch: dict, mode: str = "train",
                z_override: torch.Tensor | None = None) -> ForwardResult:
        """Run the full pipeline.

        ``batch["history"]`` is required; training mode also needs
        ``batch["future_veh"]`` and ``batch["future_flow"]`` for the future
        distribution.  Inference uses the mean of the present distribution, so
        repeated calls are identical; training samples the future distribution
        through the reparameterization trick.
        """
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        context, skips = self.encode_history(batch["history"])
        if mode == "train":
            if "future_veh" not in batch or "future_flow" not in batch:
                raise ValueError("training mode requires future vehicle and flow grids")
            present, future = self.latent_distributions(
                context, batch["future_veh"], batch["future_flow"])
            z = future.sample() if z_override is None else z_override
        else:
            present, future = self.latent_distributions(context)
            z = present.mean if z_override is None else z_override
        future_hidden = self.rollout_future(context, z)
        bundle = self.decode_bundle(future_hidden, skips)

        flows = bundle.flow  # (B, T, 2, h, w)
        warped_veh = warp_sequence(bundle.det_veh, flows[:, :, 0], flows[:, :, 1])
        warped_dyn = warp_sequence(bundle.det_dyn, flows[:, :, 0], flows[:, :, 1])
        return ForwardResult(bundle=bundle, present=present, future=future, z=z,
                             warped_veh=warped_veh, warped_dyn=warped_dyn)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
