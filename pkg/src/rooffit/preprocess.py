"""Cloud cleanup: local-plane smoothing, hole filling, and terrain extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import Delaunay, QhullError, cKDTree

from .cloud import PointCloud
from .raster import NODATA, RasterGrid, _grid_reduce

__all__ = ["PreprocessConfig", "smooth", "fill_holes", "extract_dtm"]


@dataclass
class PreprocessConfig:
    smoothing_radius: float = 1.5
    median_grid_size: float = 0.5
    hole_area_threshold: float = 1.0
    fill_grid_spacing: float = 0.5
    dtm_resolution: float = 1.0

    def __post_init__(self):
        for name in (
            "smoothing_radius",
            "median_grid_size",
            "hole_area_threshold",
            "fill_grid_spacing",
            "dtm_resolution",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _local_planes(xyz, radius):
    """Per-point least-squares plane z = a*x + b*y + c over a 3D ball.

    Returns (coeffs (n, 3), ok mask).  Points with under 3 neighbors or a
    degenerate (collinear-in-xy) neighborhood get ok=False.
    """
    n = len(xyz)
    tree = cKDTree(xyz)
    pairs = tree.query_ball_point(xyz, radius)
    coeffs = np.zeros((n, 3))
    ok = np.zeros(n, dtype=bool)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    for i, nbr in enumerate(pairs):
        if len(nbr) < 3:
            continue
        nbr = np.asarray(nbr)
        xs, ys, zs = x[nbr], y[nbr], z[nbr]
        mx, my = xs.mean(), ys.mean()
        cx, cy = xs - mx, ys - my
        sxx, syy, sxy = cx @ cx, cy @ cy, cx @ cy
        det = sxx * syy - sxy * sxy
        scale = sxx + syy
        if scale <= 0 or det < 1e-9 * scale * scale:
            continue
        sxz, syz = cx @ zs, cy @ zs
        a = (syy * sxz - sxy * syz) / det
        b = (sxx * syz - sxy * sxz) / det
        c = zs.mean() - a * mx - b * my
        coeffs[i] = (a, b, c)
        ok[i] = True
    return coeffs, ok


def smooth(cloud: PointCloud, cfg: PreprocessConfig) -> PointCloud:
    """Moving-least-squares z projection followed by a plane-relative median.

    Each z is replaced by the local LS plane value, then by the plane value
    plus the median of neighbor residuals about that same plane, so exact
    planes (of any tilt) are fixed points.  x, y, color are untouched;
    points with fewer than 3 neighbors in the smoothing radius stay as-is.
    """
    if cloud.n == 0:
        raise ValueError("empty cloud")
    xyz = cloud.xyz
    coeffs, ok = _local_planes(xyz, cfg.smoothing_radius)
    x, y = xyz[:, 0], xyz[:, 1]
    z_mls = np.where(ok, coeffs[:, 0] * x + coeffs[:, 1] * y + coeffs[:, 2], xyz[:, 2])

    tree2d = cKDTree(xyz[:, :2])
    nbrs = tree2d.query_ball_point(xyz[:, :2], cfg.median_grid_size)
    z_out = z_mls.copy()
    for i, nbr in enumerate(nbrs):
        if not ok[i] or len(nbr) < 2:
            continue
        nbr = np.asarray(nbr)
        a, b, c = coeffs[i]
        resid = z_mls[nbr] - (a * x[nbr] + b * y[nbr] + c)
        z_out[i] = a * x[i] + b * y[i] + c + np.median(resid)
    return cloud.with_xyz(np.column_stack([x, y, z_out]))


def fill_holes(cloud: PointCloud, cfg: PreprocessConfig) -> PointCloud:
    """Insert grid points inside oversized triangles of the 2D triangulation.

    Synthetic points take barycentric z and the average color of the
    triangle's vertices, and carry the synthetic provenance flag.
    """
    if cloud.n < 3:
        return cloud
    try:
        tri = Delaunay(cloud.xyz[:, :2])
    except QhullError:
        return cloud  # degenerate footprint, nothing to triangulate
    verts = cloud.xyz[:, :2][tri.simplices]  # (t, 3, 2)
    e1 = verts[:, 1] - verts[:, 0]
    e2 = verts[:, 2] - verts[:, 0]
    areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    big = np.nonzero(areas > cfg.hole_area_threshold)[0]
    if big.size == 0:
        return cloud

    s = cfg.fill_grid_spacing
    new_xyz, new_rgb, new_lbl = [], [], []
    for t in big:
        ia, ib, ic = tri.simplices[t]
        pa, pb, pc = cloud.xyz[ia], cloud.xyz[ib], cloud.xyz[ic]
        lo = np.floor(np.minimum(np.minimum(pa[:2], pb[:2]), pc[:2]) / s).astype(int)
        hi = np.ceil(np.maximum(np.maximum(pa[:2], pb[:2]), pc[:2]) / s).astype(int)
        gx, gy = np.meshgrid(
            (np.arange(lo[0], hi[0]) + 0.5) * s,
            (np.arange(lo[1], hi[1]) + 0.5) * s,
        )
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        # barycentric coordinates w.r.t. (pa, pb, pc)
        m = np.array([pb[:2] - pa[:2], pc[:2] - pa[:2]]).T
        uv = np.linalg.solve(m, (pts - pa[:2]).T).T
        u, v = uv[:, 0], uv[:, 1]
        w = 1.0 - u - v
        inside = (u > 1e-9) & (v > 1e-9) & (w > 1e-9)
        if not inside.any():
            continue
        u, v, w = u[inside], v[inside], w[inside]
        zs = w * pa[2] + u * pb[2] + v * pc[2]
        new_xyz.append(np.column_stack([pts[inside], zs]))
        color = (cloud.rgb[ia] + cloud.rgb[ib] + cloud.rgb[ic]) / 3.0
        new_rgb.append(np.tile(color, (inside.sum(), 1)))
        if cloud.labels is not None:
            tri_labels = [cloud.labels[ia], cloud.labels[ib], cloud.labels[ic]]
            lbl = int(np.bincount(tri_labels).argmax())
            new_lbl.append(np.full(inside.sum(), lbl, dtype=np.int32))
    if not new_xyz:
        return cloud
    add_xyz = np.vstack(new_xyz)
    add_n = len(add_xyz)
    extra = PointCloud(
        add_xyz,
        np.vstack(new_rgb),
        np.full((add_n, 3), np.nan) if cloud.normals is not None else None,
        np.concatenate(new_lbl) if cloud.labels is not None else None,
        np.ones(add_n, dtype=bool),
    )
    base = cloud
    if base.synthetic is None:
        base = PointCloud(
            base.xyz, base.rgb, base.normals, base.labels, np.zeros(base.n, bool)
        )
    return PointCloud.concat([base, extra])


def extract_dtm(
    cloud: PointCloud,
    cfg: PreprocessConfig,
    max_window: float = 35.0,
    slope: float = 0.15,
    dh0: float = 0.25,
    dh_max: float = 3.0,
) -> RasterGrid:
    """Ground raster by progressive morphological filtering of the min-z grid.

    Cells rejected by the growing-window opening test (above-ground) and
    empty cells are filled from the nearest ground cell; the result is
    clamped so it never exceeds a cell's minimum observed z.
    """
    if cloud.n == 0:
        raise ValueError("empty cloud")
    res = cfg.dtm_resolution
    minz_grid = _grid_reduce(cloud.xyz[:, :2], cloud.xyz[:, 2], res, "min")
    minz = minz_grid.values
    occupied = minz != NODATA

    surface = _nearest_fill(minz, occupied)
    ground = occupied.copy()
    prev = surface
    half = 1
    while (2 * half + 1) * res <= max_window + res:
        opened = ndimage.grey_opening(prev, size=2 * half + 1, mode="nearest")
        dh = min(dh0 + slope * half * res, dh_max)
        ground &= (prev - opened) <= dh
        prev = opened
        half *= 2

    if not ground.any():
        ground = occupied  # filter rejected everything; fall back to min surface
    dtm = _nearest_fill(np.where(ground, minz, NODATA), ground)
    dtm[occupied] = np.minimum(dtm[occupied], minz[occupied])
    return RasterGrid(minz_grid.origin_x, minz_grid.origin_y, res, dtm)


def _nearest_fill(values, valid):
    """Fill invalid cells with the nearest valid cell's value."""
    if valid.all():
        return values.copy()
    dist_idx = ndimage.distance_transform_edt(
        ~valid, return_distances=False, return_indices=True
    )
    return values[tuple(dist_idx)]
