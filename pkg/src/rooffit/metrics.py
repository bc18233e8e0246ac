"""Render models back to mask/DSM rasters and score them against references.

Completeness is recall, correctness is precision, IoU is intersection over
union, all over raster cells.  The 3D variants count a cell as a true
positive only when both masks agree AND the heights match within a
tolerance, so 3D metrics can never exceed their 2D counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from .model import BuildingModel
from .raster import RasterGrid

__all__ = ["EvalReport", "render_model", "render_models", "score_2d", "score_3d"]


@dataclass
class EvalReport:
    comp2d: float
    corr2d: float
    iou2d: float
    comp3d: float
    corr3d: float
    iou3d: float
    z_tolerance: float

    def __post_init__(self):
        for name in ("2d", "3d"):
            iou = getattr(self, f"iou{name}")
            comp = getattr(self, f"comp{name}")
            corr = getattr(self, f"corr{name}")
            if iou > min(comp, corr) + 1e-12:
                raise ValueError("IoU cannot exceed completeness or correctness")

    def to_text(self) -> str:
        return "".join(
            f"{k}={getattr(self, k)!r}\n"
            for k in (
                "comp2d",
                "corr2d",
                "iou2d",
                "comp3d",
                "corr3d",
                "iou3d",
                "z_tolerance",
            )
        )

    @staticmethod
    def from_text(text: str) -> "EvalReport":
        kv = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = float(v)
        return EvalReport(**kv)


def _render_grid(dtm: RasterGrid, resolution: float, like=None):
    if like is not None:
        width, height = like.width, like.height
        resolution = like.resolution
        xs = like.origin_x + (np.arange(width) + 0.5) * resolution
        ys = like.origin_y + (np.arange(height) + 0.5) * resolution
        return width, height, xs, ys, (like.origin_x, like.origin_y, resolution)
    width = int(np.ceil(dtm.width * dtm.resolution / resolution))
    height = int(np.ceil(dtm.height * dtm.resolution / resolution))
    xs = dtm.origin_x + (np.arange(width) + 0.5) * resolution
    ys = dtm.origin_y + (np.arange(height) + 0.5) * resolution
    return width, height, xs, ys, (dtm.origin_x, dtm.origin_y, resolution)


def render_models(
    models: list[BuildingModel], dtm: RasterGrid, resolution: float, like=None
) -> tuple[RasterGrid, RasterGrid]:
    """(mask, dsm): mask 1 under any roof polygon, dsm the highest roof
    surface at the cell center, terrain elsewhere.  The grid covers the DTM
    extent, or copies the geometry of `like` when given."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    width, height, xs, ys, geo = _render_grid(dtm, resolution, like)
    gx, gy = np.meshgrid(xs, ys)
    flat_x, flat_y = gx.ravel(), gy.ravel()
    dsm = dtm.value_at(flat_x, flat_y)
    # fill any nodata terrain with the lowest ground sample
    occ = dsm != dtm.nodata
    if not occ.all():
        fill = dsm[occ].min() if occ.any() else 0.0
        dsm[~occ] = fill
    mask = np.zeros(flat_x.shape, dtype=float)
    for model in models:
        for seg in model.roofs:
            poly = ShapelyPolygon(seg.boundary)
            if not poly.is_valid:
                poly = poly.buffer(0)
            hit = shapely.contains_xy(poly, flat_x, flat_y)
            if not hit.any():
                continue
            z = seg.primitive.height_at(
                np.column_stack([flat_x[hit], flat_y[hit]]), clamp=True
            )
            z = np.where(np.isfinite(z), z, model.ground_height)
            mask[hit] = 1.0
            dsm[hit] = np.maximum(dsm[hit], z)
    ox, oy, res = geo
    mask_grid = RasterGrid(ox, oy, res, mask.reshape(height, width))
    dsm_grid = RasterGrid(ox, oy, res, dsm.reshape(height, width))
    return mask_grid, dsm_grid


def render_model(model: BuildingModel, dtm: RasterGrid, resolution: float):
    return render_models([model], dtm, resolution)


def _check_geometry(a: RasterGrid, b: RasterGrid):
    if not a.same_geometry(b):
        raise ValueError("raster geometries do not match")


def _rates(tp: int, fp: int, fn: int):
    comp = tp / (tp + fn) if tp + fn else 1.0
    corr = tp / (tp + fp) if tp + fp else 1.0
    iou = tp / (tp + fp + fn) if tp + fp + fn else 1.0
    return comp, corr, iou


def score_2d(pred: RasterGrid, truth: RasterGrid):
    """(completeness, correctness, IoU) of binary masks."""
    _check_geometry(pred, truth)
    p = pred.values == 1.0
    t = truth.values == 1.0
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    return _rates(tp, fp, fn)


def score_3d(
    pred_dsm: RasterGrid,
    truth_dsm: RasterGrid,
    pred_mask: RasterGrid,
    truth_mask: RasterGrid,
    z_tolerance: float = 1.0,
):
    """(completeness, correctness, IoU) counting a cell as true positive
    only if both masks are 1 and |pred z - truth z| <= z_tolerance."""
    _check_geometry(pred_dsm, truth_dsm)
    _check_geometry(pred_mask, truth_mask)
    _check_geometry(pred_dsm, pred_mask)
    p = pred_mask.values == 1.0
    t = truth_mask.values == 1.0
    close = np.abs(pred_dsm.values - truth_dsm.values) <= z_tolerance
    tp = int(np.sum(p & t & close))
    fp = int(np.sum(p)) - tp
    fn = int(np.sum(t)) - tp
    return _rates(tp, fp, fn)
