"""Multi-cue RANSAC: distance, normal, and color weights in action.

Run:  python3 demos/04_multi_cue_ransac.py
"""

import numpy as np

from rooffit import PointCloud, Plane, estimate_normals
from rooffit.ransac import (
    RansacConfig,
    fit_score,
    point_weights,
    ransac_cylinder,
    ransac_plane,
    ransac_sphere,
)

rng = np.random.default_rng(3)
cfg = RansacConfig(rng_seed=0)

# Weights fall off smoothly with each cue.
prim = Plane([0, 0, 1], 10.0, seed_color=[180, 60, 60])
probe = PointCloud(
    [[0, 0, 10.0], [0, 0, 10.3], [0, 0, 10.0], [0, 0, 10.0]],
    [[180, 60, 60], [180, 60, 60], [180, 60, 60], [60, 60, 180]],
    normals=[[0, 0, 1.0], [0, 0, 1.0], [0.5, 0, np.sqrt(0.75)], [0, 0, 1.0]],
)
w = point_weights(probe, prim, cfg)
print("weights: perfect point {:.3f}, 0.3 m off {:.3f}, 30deg-normal {:.3f}, "
      "wrong color {:.3f}".format(*w))

# Two stacked roofs of different colors: the color cue keeps the score of
# a plane hypothesis focused on its own roof.
n = 1200
xy = rng.uniform(0, 20, (n, 2))
red = PointCloud(
    np.column_stack([xy, 10 + rng.normal(0, 0.1, n)]),
    np.clip(rng.normal([180, 60, 60], 5, (n, 3)), 0, 255),
)
gray = PointCloud(
    np.column_stack([xy + 18, 10.2 + rng.normal(0, 0.1, n)]),
    np.clip(rng.normal([120, 120, 120], 5, (n, 3)), 0, 255),
)
both = PointCloud.concat([red, gray])
s_red, inl = fit_score(both, prim, cfg)
near = np.sum(prim.distance(both.xyz) <= cfg.inlier_distance)
print(f"red-seeded plane: {near} points inside the band, weighted score "
      f"{s_red:.0f} (color discounts the gray roof)")

# Primitive recovery on noisy data.
planes = ransac_plane(estimate_normals(both, k=16), cfg)
print(f"plane fit: normal {np.round(planes.primitive.normal, 3)}, "
      f"{len(planes.inlier_indices)} inliers, mse {planes.mse:.4f}")

v = rng.normal(size=(2000, 3))
v /= np.linalg.norm(v, axis=1, keepdims=True)
v[:, 2] = np.abs(v[:, 2])
dome = PointCloud(
    [0, 0, 4] + v * (9.0 + rng.normal(0, 0.1, 2000))[:, None],
    np.full((2000, 3), 128.0),
)
sph = ransac_sphere(dome, cfg)
print(f"sphere fit: radius {sph.primitive.radius:.3f} m (truth 9.0), "
      f"center {np.round(sph.primitive.center, 2)}")

t = rng.uniform(0, np.pi, 2500)
x = rng.uniform(0, 25, 2500)
r = 5.0 + rng.normal(0, 0.1, 2500)
barrel = PointCloud(
    np.column_stack([x, r * np.cos(t), r * np.sin(t)]), np.full((2500, 3), 128.0)
)
barrel = estimate_normals(barrel, k=16)
cyl = ransac_cylinder(barrel, cfg)
print(f"cylinder fit: radius {cyl.primitive.radius:.3f} m (truth 5.0), "
      f"axis {np.round(cyl.primitive.axis_dir, 3)}")
