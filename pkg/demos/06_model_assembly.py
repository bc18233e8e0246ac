"""From fitted primitives to a watertight mesh: boundary tracing, ridge
snapping, facade draping, export.

Run:  python3 demos/06_model_assembly.py
"""

import tempfile
from pathlib import Path

import numpy as np

from rooffit import PointCloud, Plane, RasterGrid, ShapeLabel
from rooffit.model import (
    RoofSegment,
    assemble,
    export_mesh,
    intersect_adjacent,
    read_mesh,
    trace_boundary,
)

rng = np.random.default_rng(5)

# A gable: two 26-degree planes meeting at the ridge y = 8.
slope = 0.5
length, span, ridge_y, eave_z = 16.0, 16.0, 8.0, 9.0
halves = []
for lo, hi, sgn in ((0.0, 8.0, +1), (8.0, 16.0, -1)):
    xy = rng.uniform((0, lo), (length, hi), (2200, 2))
    rise = xy[:, 1] if sgn > 0 else (2 * ridge_y - xy[:, 1])
    z = eave_z + slope * rise + rng.normal(0, 0.08, len(xy))
    halves.append(PointCloud(np.column_stack([xy, z]), np.full((2200, 3), 128.0)))

segments = []
for half, sgn in zip(halves, (+1, -1)):
    ring = trace_boundary(half, alpha=1.0)
    normal = np.array([0.0, -sgn * slope, 1.0])
    normal /= np.linalg.norm(normal)
    prim = Plane(normal, float(normal @ [0, ridge_y, eave_z + slope * ridge_y]))
    segments.append(RoofSegment(prim, ring, ShapeLabel.SLOPED, inliers=half))
    print(f"traced boundary with {len(ring)} vertices")

# Snap the ragged shared edge onto the analytic ridge line.
snapped = intersect_adjacent(segments, adjacency_gap=1.0)
for seg in snapped:
    near = np.abs(seg.boundary[:, 1] - ridge_y) < 1.0
    if near.any():
        err = np.abs(seg.boundary[near, 1] - ridge_y).max()
        print(f"ridge vertices now within {err:.3f} m of the true ridge")

dtm = RasterGrid(-5.0, -5.0, 1.0, np.zeros((30, 30)))
model = assemble(snapped, dtm)
print(f"assembled: {len(model.roofs)} roofs, {len(model.facades)} facades, "
      f"ground at {model.ground_height:.2f} m")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "gable.mesh"
    export_mesh(model, path)
    verts, faces = read_mesh(path)
    print(f"exported mesh: {len(verts)} vertices, {len(faces)} triangles")
