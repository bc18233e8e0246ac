"""Point-cloud file I/O.

ASCII format: one header line

    rooffit v1 n=<count> cols=<col-list>

followed by one whitespace-separated row per point, columns in header
order.  Required columns: x y z r g b.  Optional: nx ny nz label, with
label in {0=Flat, 1=Sloped, 2=Cylindrical, 3=Spherical}.  Floats are
written with repr() so round-trips are exact.
"""

from __future__ import annotations

import re

import numpy as np

from .cloud import PointCloud

__all__ = ["read_point_cloud", "write_point_cloud"]

_REQUIRED = ("x", "y", "z", "r", "g", "b")
_OPTIONAL = ("nx", "ny", "nz", "label")
_HEADER_RE = re.compile(r"^rooffit v1 n=(\d+) cols=(.+)$")


class PointCloudFormatError(ValueError):
    pass


def write_point_cloud(cloud: PointCloud, path) -> None:
    cols = list(_REQUIRED)
    arrays = [cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2],
              cloud.rgb[:, 0], cloud.rgb[:, 1], cloud.rgb[:, 2]]
    if cloud.normals is not None:
        cols += ["nx", "ny", "nz"]
        arrays += [cloud.normals[:, 0], cloud.normals[:, 1], cloud.normals[:, 2]]
    if cloud.labels is not None:
        cols.append("label")
        arrays.append(cloud.labels)
    with open(path, "w") as f:
        f.write(f"rooffit v1 n={cloud.n} cols={','.join(cols)}\n")
        for i in range(cloud.n):
            f.write(" ".join(
                str(int(a[i])) if name == "label" else repr(float(a[i]))
                for name, a in zip(cols, arrays)
            ) + "\n")


def read_point_cloud(path) -> PointCloud:
    with open(path) as f:
        header = f.readline().rstrip("\n")
        m = _HEADER_RE.match(header)
        if not m:
            raise PointCloudFormatError(f"{path}: line 1: bad header {header!r}")
        count = int(m.group(1))
        cols = [c for c in re.split(r"[,\s]+", m.group(2).strip()) if c]
        for c in cols:
            if c not in _REQUIRED + _OPTIONAL:
                raise PointCloudFormatError(f"{path}: line 1: unknown column {c!r}")
        for c in _REQUIRED:
            if c not in cols:
                raise PointCloudFormatError(f"{path}: line 1: missing column {c!r}")
        rows = np.empty((count, len(cols)))
        for i in range(count):
            line = f.readline()
            if not line:
                raise PointCloudFormatError(
                    f"{path}: line {i + 2}: expected {count} rows, file ended at {i}"
                )
            parts = line.split()
            if len(parts) != len(cols):
                raise PointCloudFormatError(
                    f"{path}: line {i + 2}: expected {len(cols)} columns, got {len(parts)}"
                )
            try:
                rows[i] = [float(p) for p in parts]
            except ValueError as e:
                raise PointCloudFormatError(f"{path}: line {i + 2}: {e}") from None
        trailing = f.readline()
        if trailing.strip():
            raise PointCloudFormatError(
                f"{path}: line {count + 2}: more rows than header n={count}"
            )
    at = {c: rows[:, j] for j, c in enumerate(cols)}
    xyz = np.column_stack([at["x"], at["y"], at["z"]])
    rgb = np.column_stack([at["r"], at["g"], at["b"]])
    normals = None
    if "nx" in cols:
        if not ("ny" in cols and "nz" in cols):
            raise PointCloudFormatError(f"{path}: line 1: partial normal columns")
        normals = np.column_stack([at["nx"], at["ny"], at["nz"]])
    labels = None
    if "label" in cols:
        labels = at["label"]
        if count and (np.any(labels != np.round(labels)) or
                      labels.min() < 0 or labels.max() > 3):
            bad = int(np.argmax((labels != np.round(labels)) |
                                (labels < 0) | (labels > 3)))
            raise PointCloudFormatError(
                f"{path}: line {bad + 2}: bad label value {labels[bad]!r}"
            )
        labels = labels.astype(np.int32)
    return PointCloud(xyz, rgb, normals, labels)
