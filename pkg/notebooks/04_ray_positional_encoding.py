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
# # Anchors along rays and their encoding
#
# Camera tokens are described by d points along their ray; BEV tokens by d
# points up the vertical through the cell. A query pairs one of each. The
# learned map from anchors to features is replaced here by a fixed
# sinusoidal expansion of the normalized coordinates.

# %%
import numpy as np

from sparse_selector.geometry import backproject_pixel_ray
from sparse_selector.raype import (
    AnchorSequence,
    embed,
    embed_query,
    max_spacing,
    min_pair_distance,
    query_anchor_pair,
    sample_bev_anchors,
    sample_camera_anchors,
)
from sparse_selector.scene import SceneRegion, surround_rigs

region = SceneRegion()
rig = surround_rigs(6)[1]

# %%
ray = backproject_pixel_ray(rig, 9, 20)
cam = sample_camera_anchors(ray, 16, region)
print(np.round(cam.points[:5], 3))
print("clamped:", cam.clamped.astype(int))

# %%
bev = sample_bev_anchors((12.3, 4.5), 16, region)
print("z:", np.round(bev.points[:, 2], 3))
print("single anchor:", sample_bev_anchors((12.3, 4.5), 1, region).points)

# %% [markdown]
# ## Crossing rays
#
# Put the BEV vertical through a point on the camera ray: some pair of
# anchors is then no further apart than the coarser sampling step.

# %%
x, y, _ = ray.at(20.0)
a, b = query_anchor_pair(ray, (x, y), 16, region)
print(f"closest pair {min_pair_distance(a, b):.3f} m, max spacing {max_spacing(a, b):.3f} m")

# %%
pe = embed_query((a, b), 256, region)
print(len(pe), "components, range", pe.values.min().round(3), pe.values.max().round(3))

# %% [markdown]
# With one frequency per coordinate, the code distance grows steadily as
# an anchor slides across the region. Higher octaves wrap around, so the
# distance is only locally monotone at larger embedding sizes.

# %%
def one(p):
    return AnchorSequence(np.array([p], dtype=float), "query", np.zeros(1), np.zeros(1, dtype=bool))

base = embed(one(region.lower), 6, region).values
for x in np.linspace(-54, 54, 7):
    v = embed(one((x, -54.0, -5.0)), 6, region).values
    print(f"x={x:6.1f}  distance {np.linalg.norm(v - base):.4f}")
