"""Build a synthetic scene and look at what the sensor-style renderer produces.

Generates one random scene, renders a few timesteps from the moving ego
perspective, and saves a panel of occupancy-state composites (red = unknown,
green = dynamic, blue = static), vehicle masks and velocity magnitudes.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gridcast import SensorModel, WorldConfig, generate_scene, render_frame
from gridcast.geometry import grid_frame_for

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

config = WorldConfig(n_vehicles=4, n_pedestrians=3, n_cyclists=1)
script = generate_scene(seed=21, config=config)
print(f"scene 21: {len(script.agents)} agents, {len(script.static_shapes)} static shapes, "
      f"{script.duration:.0f}s")
for agent in script.agents:
    print(f"  {agent.kind:<10} {agent.length:.1f}x{agent.width:.1f} m, "
          f"speed {agent.segments[0].speed:.1f} m/s")

sensor = SensorModel(max_range=20.0, ray_count=1024, state_noise=0.05,
                     dropout_rate=0.05, velocity_noise=0.2)
times = [0.0, 2.0, 4.0, 6.0]
fig, axes = plt.subplots(3, len(times), figsize=(3.2 * len(times), 9.5))
for col, t in enumerate(times):
    geometry = grid_frame_for(script.ego.pose_at(t), 64, 64, 0.5)
    occ, vel, veh = render_frame(script, t, sensor, geometry)
    rgb = np.stack([occ.unk, occ.dyn, occ.stat], axis=-1)
    axes[0, col].imshow(rgb)
    axes[0, col].set_title(f"occupancy states  t={t:.1f}s")
    axes[1, col].imshow(veh.prob, cmap="gray", vmin=0, vmax=1)
    axes[1, col].set_title("vehicle mask")
    axes[2, col].imshow(vel.magnitude(), cmap="viridis")
    axes[2, col].set_title("|velocity| m/s")
    for ax in axes[:, col]:
        ax.set_xticks([])
        ax.set_yticks([])
fig.suptitle("ego-centric renders (ego at center, unknown beyond range/occlusion)")
fig.tight_layout()
fig.savefig(OUT / "world.png", dpi=110)
print(f"wrote {OUT / 'world.png'}")
