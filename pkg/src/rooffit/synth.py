"""Curved-roof synthesis from real flat roofs, and training-set generation.

A flat crop is bent onto a cylinder or sphere by shifting each point
vertically: z' = z - h0 + g(x, y), where h0 is the crop's mean height and
g is the target surface.  The shift preserves every point's vertical
residual, so the synthesized roof keeps the crop's real noise signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .cloud import PointCloud, ShapeLabel
from .io import write_point_cloud

__all__ = [
    "RectRegion",
    "DiskRegion",
    "BendSpec",
    "crop_flat_region",
    "surface_height",
    "apply_height_field",
    "bend",
    "compose_complex_roof",
    "generate_training_set",
]


@dataclass
class RectRegion:
    """Rotated rectangle in the ground plane; `axis` is the long/axis side."""

    center: np.ndarray
    axis: np.ndarray  # unit 2-vector
    half_length: float
    half_width: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        a = np.asarray(self.axis, dtype=float)
        self.axis = a / np.linalg.norm(a)
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("rectangle extents must be positive")

    def contains(self, xy):
        d = np.atleast_2d(xy) - self.center
        perp = np.array([-self.axis[1], self.axis[0]])
        return (np.abs(d @ self.axis) <= self.half_length) & (
            np.abs(d @ perp) <= self.half_width
        )


@dataclass
class DiskRegion:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise ValueError("disk radius must be positive")

    def contains(self, xy):
        d = np.atleast_2d(xy) - self.center
        return np.einsum("ij,ij->i", d, d) <= self.radius**2


@dataclass
class BendSpec:
    shape: ShapeLabel  # CYLINDRICAL or SPHERICAL
    region: Union[RectRegion, DiskRegion]
    radius: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.shape == ShapeLabel.CYLINDRICAL:
            if not isinstance(self.region, RectRegion):
                raise ValueError("cylindrical bend needs a rectangular crop")
            if self.radius < self.region.half_width:
                raise ValueError(
                    "cylinder radius must cover the crop's half width "
                    f"({self.radius} < {self.region.half_width})"
                )
        elif self.shape == ShapeLabel.SPHERICAL:
            if not isinstance(self.region, DiskRegion):
                raise ValueError("spherical bend needs a disk crop")
            if self.radius < self.region.radius:
                raise ValueError(
                    "sphere radius must cover the crop disk "
                    f"({self.radius} < {self.region.radius})"
                )
        else:
            raise ValueError("bend shape must be cylindrical or spherical")


def crop_flat_region(cloud: PointCloud, spec: BendSpec):
    """Points inside the crop region and their mean height h0."""
    inside = spec.region.contains(cloud.xyz[:, :2])
    count = int(inside.sum())
    if count < 50:
        raise ValueError(
            f"crop region holds {count} points; need at least 50 to carry "
            "the noise signature"
        )
    cropped = cloud.subset(np.nonzero(inside)[0])
    return cropped, float(cropped.xyz[:, 2].mean())


def surface_height(spec: BendSpec, xy: np.ndarray, h0: float) -> np.ndarray:
    """Target surface g(x, y) whose cross-section at z = h0 is the crop region.

    Cylinder: upper sheet over the rectangle, axis parallel to the ground
    along the rectangle axis.  Sphere: upper cap over the disk.  Raises if
    any (x, y) leaves the surface's support.
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    r = spec.radius
    if spec.shape == ShapeLabel.CYLINDRICAL:
        reg = spec.region
        perp = np.array([-reg.axis[1], reg.axis[0]])
        u = (xy - reg.center) @ perp
        under = r * r - u * u
        drop = np.sqrt(r * r - reg.half_width**2)
    else:
        reg = spec.region
        rho2 = np.sum((xy - reg.center) ** 2, axis=1)
        under = r * r - rho2
        drop = np.sqrt(r * r - reg.radius**2)
    if np.any(under < 0):
        raise ValueError("bend surface undefined at some crop point")
    return h0 - drop + np.sqrt(under)


def apply_height_field(cloud: PointCloud, h0: float, g: np.ndarray) -> PointCloud:
    """z' = z - h0 + g per point; x, y, color untouched."""
    g = np.asarray(g, dtype=float)
    if g.shape != (cloud.n,):
        raise ValueError("height field length must match point count")
    xyz = cloud.xyz.copy()
    xyz[:, 2] = xyz[:, 2] - h0 + g
    return cloud.with_xyz(xyz)


def bend(cropped: PointCloud, h0: float, spec: BendSpec) -> PointCloud:
    """Bend a flat crop onto the spec's surface, preserving residuals."""
    g = surface_height(spec, cropped.xyz[:, :2], h0)
    out = apply_height_field(cropped, h0, g)
    label = np.full(out.n, int(spec.shape), dtype=np.int32)
    return out.with_labels(label)


def compose_complex_roof(parts: list[PointCloud], rng_seed: int = 0) -> PointCloud:
    """Union 1-3 labeled parts; the first stays put, the rest get a random
    rotation about z, uniform scale, and translation.

    Extra parts land straddling the anchor's footprint edge and slightly
    above its top surface, the way wings and dormers sit on real composite
    roofs, so the two surfaces do not interpenetrate.
    """
    if not 1 <= len(parts) <= 3:
        raise ValueError("compose takes 1 to 3 parts")
    for p in parts:
        if p.labels is None:
            raise ValueError("all parts must be labeled")
    rng = np.random.default_rng(rng_seed)
    anchor = parts[0]
    lo = anchor.xyz.min(axis=0)
    hi = anchor.xyz.max(axis=0)
    center_xy = 0.5 * (lo[:2] + hi[:2])
    half_xy = np.maximum(0.5 * (hi[:2] - lo[:2]), 1.0)
    placed = [anchor]
    for part in parts[1:]:
        ang = rng.uniform(0, 2 * np.pi)
        scale = rng.uniform(0.7, 1.3)
        c, s = np.cos(ang), np.sin(ang)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        centroid = part.xyz.mean(axis=0)
        xyz = (part.xyz - centroid) * scale @ rot.T
        out_dir = rng.uniform(0, 2 * np.pi)
        reach = rng.uniform(0.85, 1.15)
        part_lo_z = xyz[:, 2].min()
        target = np.array(
            [
                center_xy[0] + np.cos(out_dir) * reach * half_xy[0],
                center_xy[1] + np.sin(out_dir) * reach * half_xy[1],
                hi[2] + rng.uniform(1.5, 3.0) - part_lo_z,
            ]
        )
        xyz = xyz + target
        normals = None
        if part.normals is not None:
            normals = part.normals @ rot.T
        placed.append(
            PointCloud(xyz, part.rgb, normals, part.labels, part.synthetic)
        )
    return PointCloud.concat(placed)


def _random_rect(bounds, rng, min_half=2.0, max_half=8.0):
    # crop extents stay at building-roof scale regardless of source size
    lo, hi = bounds
    span = hi - lo
    ang = rng.uniform(0, np.pi)
    axis = np.array([np.cos(ang), np.sin(ang)])
    hl = rng.uniform(min_half, max(min_half * 1.5, min(max_half, 0.35 * span[0])))
    hw = rng.uniform(min_half, max(min_half * 1.5, min(max_half, 0.35 * span[1])))
    center = rng.uniform(lo + [hl, hw], np.maximum(lo + [hl, hw], hi - [hl, hw]))
    return RectRegion(center, axis, hl, hw)


def _random_disk(bounds, rng, min_radius=2.5, max_radius=6.5):
    lo, hi = bounds
    span = min(hi - lo)
    radius = rng.uniform(
        min_radius, max(min_radius * 1.2, min(max_radius, 0.4 * span))
    )
    center = rng.uniform(lo + radius, np.maximum(lo + radius, hi - radius))
    return DiskRegion(center, radius)


def _crop_with_retries(cloud, make_region, rng, attempts=30):
    bounds = (cloud.xyz[:, :2].min(axis=0), cloud.xyz[:, :2].max(axis=0))
    last_err = None
    for _ in range(attempts):
        region = make_region(bounds, rng)
        inside = region.contains(cloud.xyz[:, :2])
        if inside.sum() >= 50:
            return cloud.subset(np.nonzero(inside)[0]), region
        last_err = ValueError("crop too sparse")
    raise last_err


def _simple_sample(kind, flat_roofs, sloped_roofs, rng):
    """One single-class part of the requested shape."""
    if kind == ShapeLabel.SLOPED:
        src = sloped_roofs[rng.integers(len(sloped_roofs))]
        part, _ = _crop_with_retries(src, _random_rect, rng)
        return part.with_labels(np.full(part.n, int(kind), dtype=np.int32))
    src = flat_roofs[rng.integers(len(flat_roofs))]
    if kind == ShapeLabel.FLAT:
        part, _ = _crop_with_retries(src, _random_rect, rng)
        return part.with_labels(np.full(part.n, int(kind), dtype=np.int32))
    if kind == ShapeLabel.CYLINDRICAL:
        part, region = _crop_with_retries(src, _random_rect, rng)
        radius = max(
            region.half_width, rng.uniform(0.6, 3.0) * region.half_width
        )
        spec = BendSpec(kind, region, radius)
    else:
        part, region = _crop_with_retries(src, _random_disk, rng)
        radius = max(region.radius, rng.uniform(0.6, 3.0) * region.radius)
        spec = BendSpec(kind, region, radius)
    h0 = float(part.xyz[:, 2].mean())
    return bend(part, h0, spec)


def generate_training_set(
    flat_roofs: list[PointCloud],
    sloped_roofs: list[PointCloud],
    count_per_class: int,
    out_dir,
    rng_seed: int = 0,
    compose_probability: float = 0.5,
) -> Path:
    """Write labeled training clouds plus a manifest; returns the manifest path.

    For each class, `count_per_class` samples are generated whose anchor
    part has that class; with `compose_probability` one or two extra simple
    parts of random classes are unioned in.  Each sample's RNG stream is
    derived from (rng_seed, sample index), so reruns are byte-identical.
    """
    if not flat_roofs or not sloped_roofs:
        raise ValueError("need at least one flat and one sloped source roof")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = list(ShapeLabel)
    lines = []
    sample_index = 0
    for kind in classes:
        for _ in range(count_per_class):
            rng = np.random.default_rng((rng_seed, sample_index))
            parts = [_simple_sample(kind, flat_roofs, sloped_roofs, rng)]
            if rng.uniform() < compose_probability:
                for _ in range(int(rng.integers(1, 3))):
                    extra_kind = classes[rng.integers(4)]
                    parts.append(
                        _simple_sample(extra_kind, flat_roofs, sloped_roofs, rng)
                    )
            roof = compose_complex_roof(parts, rng_seed=int(rng.integers(2**31)))
            name = f"roof_{sample_index:05d}.txt"
            write_point_cloud(roof, out_dir / name)
            counts = np.bincount(roof.labels, minlength=4)
            lines.append(
                f"{name} flat={counts[0]} sloped={counts[1]} "
                f"cylindrical={counts[2]} spherical={counts[3]}"
            )
            sample_index += 1
    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_manifest(path):
    """Parse a training manifest into (cloud path, per-class counts) pairs."""
    path = Path(path)
    entries = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        name, *kv = line.split()
        counts = {k: int(v) for k, v in (item.split("=") for item in kv)}
        entries.append((path.parent / name, counts))
    return entries
