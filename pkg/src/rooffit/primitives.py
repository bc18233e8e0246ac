"""Parametric surface primitives: plane, sphere, cylinder.

All three expose the same small interface used by fitting and rendering:
``distance`` (unsigned point-to-surface distance), ``surface_normal_at``
(outward unit normal at the foot point), and ``height_at`` (z of the upper
sheet above a ground-plane position, NaN where the surface has no point).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Plane", "Sphere", "Cylinder", "Primitive", "canonical_upward"]


def canonical_upward(vectors: np.ndarray) -> np.ndarray:
    """Flip unit vectors so z >= 0; ties broken by first nonzero component > 0.

    Works on a single 3-vector or an (n, 3) stack.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float)).copy()
    flip = v[:, 2] < 0
    zz = v[:, 2] == 0
    flip |= zz & ((v[:, 0] < 0) | ((v[:, 0] == 0) & (v[:, 1] < 0)))
    v[flip] *= -1.0
    return v[0] if np.asarray(vectors).ndim == 1 else v


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero direction vector")
    return v / n


@dataclass
class Plane:
    """Plane n.p = d with unit normal canonicalized so nz >= 0."""

    normal: np.ndarray
    offset: float
    seed_color: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        n = _unit(self.normal)
        nc = canonical_upward(n)
        if not np.array_equal(nc, n):
            self.offset = -float(self.offset)
        self.normal = nc
        self.offset = float(self.offset)
        self.seed_color = np.asarray(self.seed_color, dtype=float)

    def signed_distance(self, xyz: np.ndarray) -> np.ndarray:
        return np.asarray(xyz, dtype=float) @ self.normal - self.offset

    def distance(self, xyz: np.ndarray) -> np.ndarray:
        return np.abs(self.signed_distance(xyz))

    def surface_normal_at(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.atleast_2d(xyz)
        return np.broadcast_to(self.normal, (len(xyz), 3)).copy()

    def height_at(self, xy: np.ndarray, clamp: bool = False) -> np.ndarray:
        """z on the plane above (x, y); NaN for near-vertical planes."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        nx, ny, nz = self.normal
        if abs(nz) < 1e-9:
            return np.full(len(xy), np.nan)
        return (self.offset - xy[:, 0] * nx - xy[:, 1] * ny) / nz


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    seed_color: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.radius = float(self.radius)
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.seed_color = np.asarray(self.seed_color, dtype=float)

    def distance(self, xyz: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(np.atleast_2d(xyz) - self.center, axis=1)
        return np.abs(d - self.radius)

    def surface_normal_at(self, xyz: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(xyz) - self.center
        n = np.linalg.norm(v, axis=1, keepdims=True)
        out = np.where(n > 1e-12, v / np.where(n == 0, 1.0, n), [0.0, 0.0, 1.0])
        return out

    def height_at(self, xy: np.ndarray, clamp: bool = False) -> np.ndarray:
        """z of the upper hemisphere above (x, y)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        rho2 = np.sum((xy - self.center[:2]) ** 2, axis=1)
        under = self.radius**2 - rho2
        if clamp:
            under = np.maximum(under, 0.0)
        with np.errstate(invalid="ignore"):
            z = self.center[2] + np.sqrt(np.where(under >= 0, under, np.nan))
        return z


@dataclass
class Cylinder:
    axis_point: np.ndarray
    axis_dir: np.ndarray
    radius: float
    seed_color: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.axis_point = np.asarray(self.axis_point, dtype=float)
        self.axis_dir = _unit(self.axis_dir)
        self.radius = float(self.radius)
        if self.radius <= 0:
            raise ValueError("cylinder radius must be positive")
        self.seed_color = np.asarray(self.seed_color, dtype=float)

    def _axis_offsets(self, xyz):
        v = np.atleast_2d(xyz) - self.axis_point
        along = v @ self.axis_dir
        perp = v - np.outer(along, self.axis_dir)
        return perp

    def distance(self, xyz: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(self._axis_offsets(xyz), axis=1)
        return np.abs(r - self.radius)

    def surface_normal_at(self, xyz: np.ndarray) -> np.ndarray:
        perp = self._axis_offsets(xyz)
        n = np.linalg.norm(perp, axis=1, keepdims=True)
        return np.where(n > 1e-12, perp / np.where(n == 0, 1.0, n), [0.0, 0.0, 1.0])

    def height_at(self, xy: np.ndarray, clamp: bool = False) -> np.ndarray:
        """z of the upper cylinder sheet above (x, y).

        Solves |(p - p0) - ((p - p0).a) a|^2 = R^2 for z with p = (x, y, z)
        and keeps the larger root.
        """
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        ax, ay, az = self.axis_dir
        dx = xy[:, 0] - self.axis_point[0]
        dy = xy[:, 1] - self.axis_point[1]
        # residual vector components as linear functions of dz
        # rx = dx - (dx*ax + dy*ay + dz*az) * ax, etc.
        s0 = dx * ax + dy * ay  # constant part of (v . a)
        # v - (v.a) a with v = (dx, dy, dz):
        #   cx = dx - (s0 + dz*az) * ax ...
        # quadratic in dz: sum of squares = R^2
        a_coef = (az * ax) ** 2 + (az * ay) ** 2 + (1 - az * az) ** 2
        bx, by, bz = dx - s0 * ax, dy - s0 * ay, -s0 * az
        b_coef = 2 * (-bx * az * ax - by * az * ay + bz * (1 - az * az))
        c_coef = bx * bx + by * by + bz * bz - self.radius**2
        if a_coef < 1e-12:  # axis vertical: surface is a vertical tube
            return np.full(len(xy), np.nan)
        disc = b_coef * b_coef - 4 * a_coef * c_coef
        if clamp:
            disc = np.maximum(disc, 0.0)
        with np.errstate(invalid="ignore"):
            dz = (-b_coef + np.sqrt(np.where(disc >= 0, disc, np.nan))) / (2 * a_coef)
        return self.axis_point[2] + dz


Primitive = Plane | Sphere | Cylinder
