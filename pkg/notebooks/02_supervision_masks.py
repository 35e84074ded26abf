# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Ray-aware supervision masks
#
# A token is foreground when the ray through its cell hits a box. For
# camera cells the ray leaves the optical center; for BEV cells it is the
# vertical column over the cell. Here we build both kinds of masks for a
# synthetic scene, check them against the brute-force oracles and render
# them as PGM images.

# %%
from pathlib import Path

import numpy as np

from sparse_selector.pnm import mask_image, write_pnm
from sparse_selector.ras import (
    mask_disagreements,
    ras_all_masks,
    ras_chords,
    ras_oracle_bev_mask,
    ras_oracle_camera_march,
)
from sparse_selector.scene import generate_scene, gt_distribution

out = Path("_output")
out.mkdir(exist_ok=True)

# %%
scene = generate_scene(seed=7, n_boxes=30, class_mix=[0.1] * 10)
print(dict(zip(scene.class_names, gt_distribution(scene).counts)))

# %%
masks = ras_all_masks(scene, workers=4)
for name, m in masks.items():
    print(f"{name:10s} {m.values.shape}  foreground {m.foreground_fraction:.3f}")

# %% [markdown]
# ## Oracle checks
#
# The BEV oracle tests every cell center against each footprint polygon.
# The camera oracle marches each ray at 1 cm; cells where both chords are
# shorter than two steps are grazing and left out.

# %%
bev_oracle, edge = ras_oracle_bev_mask(scene)
far = edge >= 1e-6
print("bev disagreements", int(((bev_oracle.values != masks["bev"].values) & far).sum()))

step = 0.01
for rig in scene.rigs:
    oracle, o_chord, t_max = ras_oracle_camera_march(scene, rig.id, step)
    a_chord = ras_chords(scene, scene.camera_grid(rig.id), t_max)
    n, excl = mask_disagreements(masks[f"camera:{rig.id}"].values, a_chord, oracle.values, o_chord, 2 * step)
    print(f"camera {rig.id}: {n} disagreements, {excl} grazing")

# %% [markdown]
# ## Render

# %%
write_pnm(mask_image(masks["bev"].values, scale=3), out / "mask_bev.pgm")
strip = np.hstack([masks[f"camera:{k}"].values for k in range(6)])
write_pnm(mask_image(strip, scale=8), out / "mask_cameras.pgm")
print(sorted(p.name for p in out.iterdir()))
