"""Point-cloud container, shape labels, and PCA normal estimation."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .primitives import canonical_upward

__all__ = ["ShapeLabel", "Point", "PointCloud", "estimate_normals"]


class ShapeLabel(IntEnum):
    """Per-point roof-shape class."""

    FLAT = 0
    SLOPED = 1
    CYLINDRICAL = 2
    SPHERICAL = 3


class Point(NamedTuple):
    x: float
    y: float
    z: float
    r: float
    g: float
    b: float


def _lock(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(eq=False)
class PointCloud:
    """Immutable set of colored 3D points with optional normals and labels.

    ``normals`` rows that are NaN mark points whose neighborhood was too
    degenerate for a reliable normal ("invalid" normals).  ``synthetic``
    flags points inserted by hole filling rather than observed.
    """

    xyz: np.ndarray
    rgb: np.ndarray
    normals: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    synthetic: Optional[np.ndarray] = None
    _tree: Optional[cKDTree] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.xyz = _lock(np.asarray(self.xyz, dtype=float).reshape(-1, 3))
        self.rgb = _lock(np.asarray(self.rgb, dtype=float).reshape(-1, 3))
        n = len(self.xyz)
        if len(self.rgb) != n:
            raise ValueError("rgb count does not match point count")
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("point coordinates must be finite")
        if n and (self.rgb.min() < 0 or self.rgb.max() > 255):
            raise ValueError("color channels must lie in [0, 255]")
        if self.normals is not None:
            nm = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(nm) != n:
                raise ValueError("normal count does not match point count")
            valid = np.all(np.isfinite(nm), axis=1)
            norms = np.linalg.norm(nm[valid], axis=1)
            if norms.size and np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("normals must be unit length")
            self.normals = _lock(nm)
        if self.labels is not None:
            lb = np.asarray(self.labels, dtype=np.int32).reshape(-1)
            if len(lb) != n:
                raise ValueError("label count does not match point count")
            if lb.size and (lb.min() < 0 or lb.max() > 3):
                raise ValueError("labels must be ShapeLabel codes 0..3")
            self.labels = _lock(lb)
        if self.synthetic is not None:
            sy = np.asarray(self.synthetic, dtype=bool).reshape(-1)
            if len(sy) != n:
                raise ValueError("synthetic flag count does not match point count")
            self.synthetic = _lock(sy)

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def n(self) -> int:
        return len(self.xyz)

    @property
    def kdtree(self) -> cKDTree:
        """Spatial index over (x, y, z), built lazily."""
        if self._tree is None:
            self._tree = cKDTree(self.xyz)
        return self._tree

    @property
    def valid_normal_mask(self) -> np.ndarray:
        if self.normals is None:
            return np.zeros(self.n, dtype=bool)
        return np.all(np.isfinite(self.normals), axis=1)

    def point(self, i: int) -> Point:
        return Point(*self.xyz[i], *self.rgb[i])

    def subset(self, indices) -> "PointCloud":
        idx = np.asarray(indices)
        return PointCloud(
            self.xyz[idx],
            self.rgb[idx],
            None if self.normals is None else self.normals[idx],
            None if self.labels is None else self.labels[idx],
            None if self.synthetic is None else self.synthetic[idx],
        )

    def with_normals(self, normals) -> "PointCloud":
        return PointCloud(self.xyz, self.rgb, normals, self.labels, self.synthetic)

    def with_labels(self, labels) -> "PointCloud":
        return PointCloud(self.xyz, self.rgb, self.normals, labels, self.synthetic)

    def with_xyz(self, xyz) -> "PointCloud":
        return PointCloud(xyz, self.rgb, self.normals, self.labels, self.synthetic)

    @staticmethod
    def concat(clouds: list["PointCloud"]) -> "PointCloud":
        if not clouds:
            raise ValueError("nothing to concatenate")
        xyz = np.vstack([c.xyz for c in clouds])
        rgb = np.vstack([c.rgb for c in clouds])
        normals = None
        if all(c.normals is not None for c in clouds):
            normals = np.vstack([c.normals for c in clouds])
        labels = None
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        synthetic = None
        if any(c.synthetic is not None for c in clouds):
            synthetic = np.concatenate(
                [
                    c.synthetic if c.synthetic is not None else np.zeros(c.n, bool)
                    for c in clouds
                ]
            )
        return PointCloud(xyz, rgb, normals, labels, synthetic)


def estimate_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    """Attach PCA normals estimated from each point's k nearest neighbors.

    The normal is the eigenvector of the neighborhood covariance with the
    smallest eigenvalue, unit length, flipped so nz >= 0.  Points whose
    neighborhood is rank deficient (collinear) get a NaN normal and are
    skipped by normal-weighted scoring downstream.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    if cloud.n < k:
        raise ValueError(f"need at least k={k} points, got {cloud.n}")
    _, idx = cloud.kdtree.query(cloud.xyz, k=k)
    normals = np.empty((cloud.n, 3))
    # chunked so the (m, k, 3) neighbor tensor stays small
    step = 65536
    for lo in range(0, cloud.n, step):
        hi = min(lo + step, cloud.n)
        neigh = cloud.xyz[idx[lo:hi]]
        centered = neigh - neigh.mean(axis=1, keepdims=True)
        cov = np.einsum("mki,mkj->mij", centered, centered) / k
        w, v = np.linalg.eigh(cov)
        nrm = canonical_upward(v[:, :, 0])
        degenerate = (w[:, 2] <= 0) | (w[:, 1] <= 1e-10 * w[:, 2])
        nrm[degenerate] = np.nan
        normals[lo:hi] = nrm
    return cloud.with_normals(normals)
