"""Point clouds, PCA normals, file round trips, and height rasterization.

Run:  python3 demos/01_clouds_and_normals.py
"""

import tempfile
from pathlib import Path

import numpy as np

from rooffit import (
    PointCloud,
    estimate_normals,
    rasterize_height,
    read_point_cloud,
    write_point_cloud,
)

rng = np.random.default_rng(0)

# A tilted roof plane with a splash of noise, colored brick-red.
n = 2000
xy = rng.uniform(0, 20, (n, 2))
z = 6.0 + 0.25 * xy[:, 0] + rng.normal(0, 0.05, n)
rgb = np.clip(rng.normal([170, 90, 70], 8, (n, 3)), 0, 255)
cloud = PointCloud(np.column_stack([xy, z]), rgb)
print(f"built a cloud of {cloud.n} points")

# Normals: smallest PCA axis of each point's 16-NN neighborhood, flipped up.
cloud = estimate_normals(cloud, k=16)
mean_normal = cloud.normals.mean(axis=0)
mean_normal /= np.linalg.norm(mean_normal)
true_normal = np.array([-0.25, 0, 1.0]) / np.linalg.norm([-0.25, 0, 1.0])
angle = np.degrees(np.arccos(min(abs(mean_normal @ true_normal), 1.0)))
print(f"mean estimated normal is {angle:.2f} degrees from the true plane normal")

# Round trip through the ASCII format: exact floats, exact colors.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "roof.txt"
    write_point_cloud(cloud, path)
    back = read_point_cloud(path)
    print(
        "file round trip:",
        "exact" if np.array_equal(back.xyz, cloud.xyz) else "lossy",
        f"({path.stat().st_size / 1024:.0f} KiB)",
    )

# Rasterize the heights: a little DSM of the roof.
dsm = rasterize_height(cloud, resolution=1.0, reducer="max")
occ = dsm.values != dsm.nodata
print(
    f"rasterized to {dsm.width}x{dsm.height} cells at 1 m; "
    f"heights span {dsm.values[occ].min():.2f}..{dsm.values[occ].max():.2f} m"
)
