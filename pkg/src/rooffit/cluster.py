"""Building-point selection by mask and Euclidean cluster extraction."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .raster import RasterGrid

__all__ = ["BuildingCluster", "apply_mask", "euclidean_cluster"]


@dataclass
class BuildingCluster:
    id: int
    cloud: PointCloud
    bbox: tuple  # (min_x, min_y, max_x, max_y)
    indices: np.ndarray  # positions in the source cloud


def apply_mask(cloud: PointCloud, mask: RasterGrid) -> PointCloud:
    """Keep points whose (x, y) cell has mask value 1; off-grid counts as 0."""
    vals = np.unique(mask.values)
    if not np.all(np.isin(vals, [0.0, 1.0, mask.nodata])):
        raise ValueError("mask raster is not binary")
    inside = mask.value_at(cloud.xyz[:, 0], cloud.xyz[:, 1], outside=0.0)
    return cloud.subset(np.nonzero(inside == 1.0)[0])


def euclidean_cluster(
    cloud: PointCloud, tolerance: float = 2.0, min_points: int = 100
) -> list[BuildingCluster]:
    """Connected components of the within-`tolerance` neighbor graph.

    Components smaller than `min_points` are dropped.  Clusters come back
    ordered by descending size, ties by lowest member index, so the result
    does not depend on input point order.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    n = cloud.n
    if n == 0:
        return []
    tree = cloud.kdtree
    seen = np.zeros(n, dtype=bool)
    components = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        members = [start]
        while queue:
            j = queue.popleft()
            for k in tree.query_ball_point(cloud.xyz[j], tolerance):
                if not seen[k]:
                    seen[k] = True
                    queue.append(k)
                    members.append(k)
        if len(members) >= min_points:
            components.append(np.sort(np.asarray(members)))
    components.sort(key=lambda m: (-len(m), m[0]))
    clusters = []
    for cid, members in enumerate(components):
        sub = cloud.subset(members)
        x, y = sub.xyz[:, 0], sub.xyz[:, 1]
        clusters.append(
            BuildingCluster(cid, sub, (x.min(), y.min(), x.max(), y.max()), members)
        )
    return clusters
