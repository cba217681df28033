"""Latent diversity: one history, two plausible futures.

Trains a small model on the two-futures scenario (the same approaching car
either keeps straight or turns) with the KL weight at zero, so the latent must
carry the mode.  Decoding with the two future-conditioned latent means then
produces two distinct vehicle forecasts from one shared history.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import torch

from gridcast.config import RunConfig
from gridcast.dataset import collate
from gridcast.geometry import GridGeometry, Pose
from gridcast.losses import LossWeights
from gridcast.metrics import soft_overlap
from gridcast.model import BackboneConfig, GridcastModel
from gridcast.training import compute_losses
from gridcast.world import SensorModel, build_sample, two_futures_scripts

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
torch.manual_seed(0)

straight_script, turn_script = two_futures_scripts()
geometry = GridGeometry(64, 64, 0.5, Pose(0, 0, 0))
sensor = SensorModel(max_range=30.0, ray_count=0)
samples = [build_sample(s, 1.5, 2, 5, 0.5, sensor, geometry)
           for s in (straight_script, turn_script)]
batch = collate(samples)

cfg = RunConfig()
cfg.backbone = BackboneConfig(encoder_channels=(16, 32), hidden_channels=32,
                              recurrent_depth=2, gru_depth=2)
cfg.weights = LossWeights(kl=0.0)
model = GridcastModel(cfg.backbone)
opt = torch.optim.AdamW(model.parameters(), lr=1e-3, weight_decay=3e-7)

steps = 500
for step in range(steps):
    result = model(batch, mode="train")
    report = compute_losses(result, batch, cfg)
    opt.zero_grad()
    report.total.backward()
    opt.step()
    if step % 100 == 0:
        print(f"step {step:3d}  total {float(report.total):.4f}")

with torch.no_grad():
    context, skips = model.encode_history(batch["history"][:1])
    _, q_straight = model.latent_distributions(context, batch["future_veh"][:1],
                                               batch["future_flow"][:1])
    _, q_turn = model.latent_distributions(context, batch["future_veh"][1:],
                                           batch["future_flow"][1:])
    decoded = {}
    for name, z in (("straight", q_straight.mean), ("turn", q_turn.mean)):
        hidden = model.rollout_future(context, z)
        decoded[name] = model.decode_bundle(hidden, skips).veh[0, -1].numpy()

gt = {"straight": samples[0].gt_future[-1].veh.prob,
      "turn": samples[1].gt_future[-1].veh.prob}
cross = soft_overlap(decoded["straight"], gt["turn"] )[0]
print(f"\nsoft-IoU(decoded straight, GT straight) = "
      f"{soft_overlap(decoded['straight'], gt['straight'])[0]:.3f}")
print(f"soft-IoU(decoded turn,     GT turn)     = "
      f"{soft_overlap(decoded['turn'], gt['turn'])[0]:.3f}")
print(f"soft-IoU(decoded straight, GT turn)     = {cross:.3f}  (should be low)")

fig, axes = plt.subplots(2, 2, figsize=(7, 7))
for row, name in enumerate(("straight", "turn")):
    axes[row, 0].imshow(decoded[name], cmap="gray", vmin=0, vmax=1)
    axes[row, 0].set_title(f"decoded ({name} latent), last step")
    axes[row, 1].imshow(gt[name], cmap="gray", vmin=0, vmax=1)
    axes[row, 1].set_title(f"ground truth ({name})")
for ax in axes.ravel():
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(OUT / "two_futures.png", dpi=110)
print(f"wrote {OUT / 'two_futures.png'}")
