"""Synthetic villages with analytic ground truth.

Each building carries its footprint ring, an analytic roof surface, and a
shape label, so generated scenes come with exact reference masks, DSMs,
and per-point labels for evaluating the pipeline end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from .cloud import PointCloud, ShapeLabel
from .raster import RasterGrid

__all__ = ["Building", "Scene", "make_building", "generate_village", "sample_scene"]


@dataclass
class Building:
    kind: str
    footprint: np.ndarray  # (m, 2) ring
    surface: Callable  # (x, y) -> z, NaN outside the footprint
    label: ShapeLabel
    color: np.ndarray


def _rect_ring(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def make_building(kind, origin, size, base_height, rng=None) -> Building:
    """One parametric building.

    kind: flat | gable | hip | barrel | dome.  `origin` is the lower-left
    footprint corner (dome: circle center), `size` the (dx, dy) extents
    (dome: radius in size[0]), `base_height` the eave height.
    """
    x0, y0 = origin
    color = np.array([80.0, 90.0, 110.0])
    if rng is not None:
        color = rng.uniform(60, 200, 3).round()
    if kind == "dome":
        rd = size[0]
        sphere_r = 1.25 * rd
        drop = np.sqrt(sphere_r**2 - rd**2)
        t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        ring = np.column_stack([x0 + rd * np.cos(t), y0 + rd * np.sin(t)])

        def surface(x, y, x0=x0, y0=y0, rd=rd, R=sphere_r, drop=drop, h=base_height):
            rho2 = (np.asarray(x) - x0) ** 2 + (np.asarray(y) - y0) ** 2
            under = R * R - rho2
            z = np.where(under >= 0, h - drop + np.sqrt(np.maximum(under, 0.0)), np.nan)
            return np.where(rho2 <= rd * rd, z, np.nan)

        return Building("dome", ring, surface, ShapeLabel.SPHERICAL, color)

    dx, dy = size
    x1, y1 = x0 + dx, y0 + dy
    ring = _rect_ring(x0, y0, x1, y1)
    inside = lambda x, y: (
        (np.asarray(x) >= x0) & (np.asarray(x) <= x1)
        & (np.asarray(y) >= y0) & (np.asarray(y) <= y1)
    )
    if kind == "flat":

        def surface(x, y):
            return np.where(inside(x, y), base_height, np.nan)

        return Building("flat", ring, surface, ShapeLabel.FLAT, color)
    if kind == "gable":
        slope = 0.45
        cy = 0.5 * (y0 + y1)

        def surface(x, y):
            z = base_height + slope * (0.5 * dy - np.abs(np.asarray(y) - cy))
            return np.where(inside(x, y), z, np.nan)

        return Building("gable", ring, surface, ShapeLabel.SLOPED, color)
    if kind == "hip":
        slope = 0.5

        def surface(x, y):
            x = np.asarray(x)
            y = np.asarray(y)
            edge = np.minimum.reduce([x - x0, x1 - x, y - y0, y1 - y])
            cap = min(dx, dy) / 2.0
            z = base_height + slope * np.minimum(edge, cap)
            return np.where(inside(x, y), z, np.nan)

        return Building("hip", ring, surface, ShapeLabel.SLOPED, color)
    if kind == "barrel":
        hw = 0.5 * dy
        radius = 1.2 * hw
        drop = np.sqrt(radius**2 - hw**2)
        cy = 0.5 * (y0 + y1)

        def surface(x, y):
            u = np.asarray(y) - cy
            under = radius * radius - u * u
            z = base_height - drop + np.sqrt(np.maximum(under, 0.0))
            return np.where(inside(x, y), z, np.nan)

        return Building("barrel", ring, surface, ShapeLabel.CYLINDRICAL, color)
    raise ValueError(f"unknown building kind {kind!r}")


@dataclass
class Scene:
    cloud: PointCloud
    buildings: list
    extent: tuple  # (x0, y0, x1, y1)
    ground_height: float

    def _grid(self, resolution):
        x0, y0, x1, y1 = self.extent
        w = int(np.ceil((x1 - x0) / resolution))
        h = int(np.ceil((y1 - y0) / resolution))
        xs = x0 + (np.arange(w) + 0.5) * resolution
        ys = y0 + (np.arange(h) + 0.5) * resolution
        return w, h, xs, ys

    def truth_mask(self, resolution: float = 1.0) -> RasterGrid:
        w, h, xs, ys = self._grid(resolution)
        gx, gy = np.meshgrid(xs, ys)
        mask = np.zeros(gx.size, dtype=float)
        for b in self.buildings:
            poly = ShapelyPolygon(b.footprint)
            mask[shapely.contains_xy(poly, gx.ravel(), gy.ravel())] = 1.0
        return RasterGrid(self.extent[0], self.extent[1], resolution,
                          mask.reshape(h, w))

    def input_mask(self, resolution: float = 1.0) -> RasterGrid:
        """Mask handed to the pipeline: truth dilated one cell, as sloppy
        automatic building masks tend to over-cover."""
        from scipy import ndimage

        truth = self.truth_mask(resolution)
        dilated = ndimage.binary_dilation(truth.values == 1.0, iterations=1)
        return RasterGrid(truth.origin_x, truth.origin_y, resolution,
                          dilated.astype(float))

    def truth_dsm(self, resolution: float = 1.0) -> RasterGrid:
        w, h, xs, ys = self._grid(resolution)
        gx, gy = np.meshgrid(xs, ys)
        dsm = np.full(gx.size, self.ground_height)
        for b in self.buildings:
            z = b.surface(gx.ravel(), gy.ravel())
            dsm = np.where(np.isnan(z), dsm, np.maximum(dsm, z))
        return RasterGrid(self.extent[0], self.extent[1], resolution,
                          dsm.reshape(h, w))

    def truth_labels_for(self, xy: np.ndarray) -> np.ndarray:
        labels = np.zeros(len(xy), dtype=np.int32)
        for b in self.buildings:
            z = b.surface(xy[:, 0], xy[:, 1])
            labels[~np.isnan(z)] = int(b.label)
        return labels


def sample_scene(
    buildings: list,
    extent,
    rng,
    density: float = 6.0,
    ground_density: float = 3.0,
    noise: float = 0.1,
    hole_fraction: float = 0.05,
    ground_height: float = 0.0,
) -> Scene:
    """Sample roof and ground points with Gaussian z noise and punched holes."""
    x0, y0, x1, y1 = extent
    polys = [ShapelyPolygon(b.footprint) for b in buildings]
    clouds = []
    for b, poly in zip(buildings, polys):
        bx0, by0, bx1, by1 = poly.bounds
        area = poly.area
        n = int(area * density)
        pts = rng.uniform((bx0, by0), (bx1, by1), (max(n * 2, 10), 2))
        keep = shapely.contains_xy(poly, pts[:, 0], pts[:, 1])
        pts = pts[keep][:n]
        z = b.surface(pts[:, 0], pts[:, 1])
        ok = ~np.isnan(z)
        pts, z = pts[ok], z[ok]
        z = z + rng.normal(0, noise, len(z))
        rgb = np.tile(b.color, (len(z), 1)) + rng.normal(0, 6, (len(z), 3))
        rgb = np.clip(rgb, 0, 255)
        labels = np.full(len(z), int(b.label), dtype=np.int32)
        clouds.append(PointCloud(np.column_stack([pts, z]), rgb, labels=labels))
    # ground everywhere outside footprints
    n_ground = int((x1 - x0) * (y1 - y0) * ground_density)
    gpts = rng.uniform((x0, y0), (x1, y1), (n_ground, 2))
    on_building = np.zeros(n_ground, dtype=bool)
    for poly in polys:
        on_building |= shapely.contains_xy(poly, gpts[:, 0], gpts[:, 1])
    gpts = gpts[~on_building]
    gz = ground_height + rng.normal(0, noise * 0.5, len(gpts))
    grgb = np.clip(
        np.tile([96.0, 108.0, 80.0], (len(gpts), 1)) + rng.normal(0, 5, (len(gpts), 3)),
        0,
        255,
    )
    glabels = np.zeros(len(gpts), dtype=np.int32)
    clouds.append(PointCloud(np.column_stack([gpts, gz]), grgb, labels=glabels))
    cloud = PointCloud.concat(clouds)

    if hole_fraction > 0:
        target = int(cloud.n * hole_fraction)
        removed = np.zeros(cloud.n, dtype=bool)
        guard = 0
        while removed.sum() < target and guard < 200:
            guard += 1
            b = buildings[rng.integers(len(buildings))]
            cx = rng.uniform(b.footprint[:, 0].min(), b.footprint[:, 0].max())
            cy = rng.uniform(b.footprint[:, 1].min(), b.footprint[:, 1].max())
            r = rng.uniform(0.8, 1.6)
            d2 = (cloud.xyz[:, 0] - cx) ** 2 + (cloud.xyz[:, 1] - cy) ** 2
            removed |= d2 <= r * r
        cloud = cloud.subset(np.nonzero(~removed)[0])
    return Scene(cloud, buildings, tuple(extent), ground_height)


def generate_village(seed: int = 0, noise: float = 0.1, hole_fraction: float = 0.05,
                     density: float = 6.0) -> Scene:
    """Ten buildings (two each: flat, gable, hip, barrel, dome) on flat ground."""
    rng = np.random.default_rng(seed)
    specs = [
        ("flat", (8, 8), (20, 14), 9.0),
        ("gable", (38, 6), (22, 14), 8.0),
        ("hip", (70, 8), (20, 16), 7.5),
        ("barrel", (8, 32), (24, 13), 8.5),
        ("dome", (48, 40), (9.0,), 7.0),
        ("flat", (68, 34), (18, 12), 11.0),
        ("gable", (8, 56), (20, 12), 9.5),
        ("hip", (38, 56), (18, 14), 8.0),
        ("barrel", (66, 56), (22, 12), 9.0),
        ("dome", (80, 90), (8.0,), 6.5),
    ]
    buildings = []
    for kind, origin, size, h in specs:
        if kind == "dome":
            origin = (origin[0], origin[1])
        buildings.append(make_building(kind, origin, size, h, rng))
    # keep the dome centers inside the extent
    extent = (0.0, 0.0, 100.0, 104.0)
    return sample_scene(
        buildings,
        extent,
        rng,
        density=density,
        noise=noise,
        hole_fraction=hole_fraction,
    )
