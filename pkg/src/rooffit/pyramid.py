"""Point-cloud pyramid by median down-pooling, and coarse-to-fine plane
extraction over it.

Level 0 is the raw cloud.  Each next level partitions (x, y) into cells
twice as coarse and keeps the one real point with the (lower) median
height per cell, so pooled points are always actual input points.
Extraction starts at the coarsest level with strict acceptance thresholds
(large minimum roof size, small MSE) and descends; points whose pooled
representative was fitted, and which lie close to that model themselves,
are pre-assigned and sit out the finer level's extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cloud import PointCloud, ShapeLabel
from .cluster import BuildingCluster
from .ransac import (
    DegenerateSamples,
    FitResult,
    RansacConfig,
    point_weights,
    ransac_plane,
    _refit_plane,
)

__all__ = ["Pyramid", "build_pyramid", "hierarchical_segment", "level_config"]


@dataclass
class Pyramid:
    levels: list  # PointCloud per level, level 0 = input
    parent_of: list  # parent_of[k][i] = index into levels[k+1]
    grid_sizes: list  # pooling cell side used to build level k+1
    origin: list  # origin[k][i] = level-0 index of levels[k] point i


def build_pyramid(
    cloud: PointCloud, base_grid: float = 0.5, max_levels: int = 3
) -> Pyramid:
    """Median down-pooling pyramid; cell side doubles per level."""
    if base_grid <= 0:
        raise ValueError("base_grid must be positive")
    if max_levels < 1:
        raise ValueError("max_levels must be at least 1")
    levels = [cloud]
    origin = [np.arange(cloud.n)]
    parent_of, grid_sizes = [], []
    for k in range(max_levels - 1):
        cell = base_grid * 2**k
        cur = levels[k]
        cols = np.floor(cur.xyz[:, 0] / cell).astype(np.int64)
        rows = np.floor(cur.xyz[:, 1] / cell).astype(np.int64)
        # canonical order: cell, then z, then level-0 index to break ties
        key = np.lexsort((origin[k], cur.xyz[:, 2], rows, cols))
        sorted_cells = np.column_stack([cols[key], rows[key]])
        change = np.ones(len(key), dtype=bool)
        change[1:] = np.any(sorted_cells[1:] != sorted_cells[:-1], axis=1)
        starts = np.nonzero(change)[0]
        counts = np.diff(np.append(starts, len(key)))
        med = starts + (counts - 1) // 2  # lower median keeps a real point
        reps = key[med]  # level-k indices of representatives, cell order
        parent = np.empty(cur.n, dtype=np.int64)
        parent[key] = np.repeat(np.arange(len(reps)), counts)
        parent_of.append(parent)
        grid_sizes.append(cell)
        levels.append(cur.subset(reps))
        origin.append(origin[k][reps])
    return Pyramid(levels, parent_of, grid_sizes, origin)


def level_config(cfg: RansacConfig, level: int, n_levels: int) -> RansacConfig:
    """Stricter acceptance at coarser levels: minimum roof size x4 and MSE
    budget /2 per level up; the inlier band loosens toward the top."""
    if n_levels <= 1 or level == 0:
        return cfg
    frac = level / (n_levels - 1)
    return replace(
        cfg,
        min_roof_points=cfg.min_roof_points * 4**level,
        max_mse=cfg.max_mse / 2**level,
        inlier_distance=cfg.inlier_distance * (1.0 + 0.75 * frac),
    )


def hierarchical_segment(
    cluster: BuildingCluster,
    cfg: RansacConfig,
    base_grid: float = 0.5,
    max_levels: int = 3,
) -> list[FitResult]:
    """Coarse-to-fine plane extraction over the planar-labeled points.

    Returns FitResults whose inlier indices refer to cluster.cloud.  The
    final model for each segment is re-estimated from its level-0 points.
    """
    cloud = cluster.cloud
    if cloud.labels is None:
        raise ValueError("hierarchical segmentation needs a labeled cluster")
    planar_idx = np.nonzero(
        (cloud.labels == int(ShapeLabel.FLAT))
        | (cloud.labels == int(ShapeLabel.SLOPED))
    )[0]
    if planar_idx.size == 0:
        return []
    planar = cloud.subset(planar_idx)
    pyr = build_pyramid(planar, base_grid, max_levels)
    n_levels = len(pyr.levels)

    primitives = []  # model id -> primitive
    model_of = [np.full(lv.n, -1, dtype=np.int64) for lv in pyr.levels]

    for k in range(n_levels - 1, -1, -1):
        lcfg = level_config(cfg, k, n_levels)
        pts = pyr.levels[k]
        if k < n_levels - 1:
            # inherit assignments from the coarser level, using that level's
            # looser band so structured deviations stay with their roof
            inherit_band = level_config(cfg, k + 1, n_levels).inlier_distance
            parent_models = model_of[k + 1][pyr.parent_of[k]]
            for m in np.unique(parent_models[parent_models >= 0]):
                cand = np.nonzero(parent_models == m)[0]
                d = primitives[m].distance(pts.xyz[cand])
                model_of[k][cand[d <= inherit_band]] = m
        extraction = 0
        while True:
            remaining = np.nonzero(model_of[k] < 0)[0]
            if len(remaining) < lcfg.min_roof_points:
                break
            if 1.0 - len(remaining) / pts.n >= cfg.segmented_ratio_stop:
                break
            rng = np.random.default_rng(
                (cfg.rng_seed, cluster.id, k, extraction)
            )
            try:
                fit = ransac_plane(pts.subset(remaining), lcfg, rng=rng)
            except (DegenerateSamples, ValueError):
                break
            if fit.mse > lcfg.max_mse or len(fit.inlier_indices) < lcfg.min_roof_points:
                break
            model_of[k][remaining[fit.inlier_indices]] = len(primitives)
            primitives.append(fit.primitive)
            extraction += 1

    results = []
    assigned0 = model_of[0]
    for m, prim in enumerate(primitives):
        idx0 = np.nonzero(assigned0 == m)[0]
        if idx0.size < 3:
            continue
        sub = planar.subset(idx0)
        w = point_weights(sub, prim, cfg)
        refined = _refit_plane(planar, idx0, w, sub.rgb.mean(axis=0))
        if refined is not None:
            prim = refined
        d = prim.distance(sub.xyz)
        keep = d <= cfg.inlier_distance
        if keep.sum() < 3:
            continue
        kept = idx0[keep]
        mse = float(np.mean(d[keep] ** 2))
        score = float(point_weights(planar.subset(kept), prim, cfg).sum())
        results.append(FitResult(prim, planar_idx[kept], score, mse))
    return results
