"""Per-point roof-shape labeling: label exchange files, a geometric
fallback classifier, and prediction scoring.

The label file format bridges to the neural component:

    rooffit-labels v1 n=<count>
    <one integer label per line, in exported point order>
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud, ShapeLabel
from .cluster import BuildingCluster
from .io import write_point_cloud

__all__ = [
    "Segmentation",
    "write_labels",
    "read_labels",
    "load_labels",
    "export_cluster",
    "geometric_fallback_classify",
    "score_segmentation",
]

_LABEL_HEADER_RE = re.compile(r"^rooffit-labels v1 n=(\d+)$")


@dataclass
class Segmentation:
    labels: np.ndarray
    source: str  # "neural" | "geometric" | "file"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32).reshape(-1)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 3):
            raise ValueError("labels must be ShapeLabel codes 0..3")


def export_cluster(cluster: BuildingCluster, path) -> None:
    """Write a cluster's cloud for external inference (defines label order)."""
    write_point_cloud(cluster.cloud, path)


def write_labels(labels, path) -> None:
    labels = np.asarray(labels, dtype=np.int32)
    with open(path, "w") as f:
        f.write(f"rooffit-labels v1 n={len(labels)}\n")
        for v in labels:
            f.write(f"{int(v)}\n")


def read_labels(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline().rstrip("\n")
        m = _LABEL_HEADER_RE.match(header)
        if not m:
            raise ValueError(f"{path}: bad label file header {header!r}")
        count = int(m.group(1))
        values = []
        for i, line in enumerate(f):
            if not line.strip():
                continue
            try:
                v = int(line)
            except ValueError:
                raise ValueError(f"{path}: line {i + 2}: not an integer") from None
            if not 0 <= v <= 3:
                raise ValueError(f"{path}: line {i + 2}: unknown label code {v}")
            values.append(v)
    if len(values) != count:
        raise ValueError(
            f"{path}: header says n={count} but file has {len(values)} labels"
        )
    return np.asarray(values, dtype=np.int32)


def load_labels(cluster: BuildingCluster, path) -> Segmentation:
    """Attach a label file to a cluster, in exported point order."""
    labels = read_labels(path)
    if len(labels) != cluster.cloud.n:
        raise ValueError(
            f"{path}: {len(labels)} labels for a cluster of {cluster.cloud.n} points"
        )
    return Segmentation(labels, "file")


def score_segmentation(pred: Segmentation, truth: Segmentation) -> float:
    """Fraction of points whose predicted label matches the reference."""
    if len(pred.labels) != len(truth.labels):
        raise ValueError("segmentations have different sizes")
    if len(pred.labels) == 0:
        return 1.0
    return float(np.mean(pred.labels == truth.labels))


def geometric_fallback_classify(
    cluster: BuildingCluster,
    radius: float = 2.0,
    tight_spread: float = 0.02,
    noise_spread: float = 0.045,
    flat_tilt_deg: float = 10.0,
    smoothing_passes: int = 2,
) -> Segmentation:
    """Label points from local normal statistics; no learning involved.

    Over each point's `radius` neighborhood the singular values s1>=s2>=s3
    of the stacked unit normals separate the cases.  A tight bundle
    (s2/s1 < tight_spread) is planar, split into Flat/Sloped by the mean
    tilt.  Normals fanning about one horizontal axis (s3 << s2, smallest
    singular direction horizontal) are cylindrical; estimation noise is
    isotropic (s3 ~ s2), so the anisotropy survives moderate noise.  An
    isotropic spread is planar while small (noise) and spherical once it
    exceeds noise_spread.  A fold between two planes also fans about an
    axis, so a fan whose angles leave one large gap is sent back to the
    planar rule.  Majority smoothing cleans up boundaries.
    """
    cloud = cluster.cloud
    if cloud.normals is None:
        raise ValueError("geometric classification needs normals")
    n = cloud.n
    valid = cloud.valid_normal_mask
    tree = cKDTree(cloud.xyz)
    neighborhoods = tree.query_ball_point(cloud.xyz, radius)
    cos_flat = np.cos(np.radians(flat_tilt_deg))
    labels = np.zeros(n, dtype=np.int32)

    def planar_label(mean_normal):
        tilt_ok = abs(mean_normal[2]) > cos_flat
        return ShapeLabel.FLAT if tilt_ok else ShapeLabel.SLOPED

    for i, nbr in enumerate(neighborhoods):
        nbr = np.asarray(nbr)
        nbr = nbr[valid[nbr]]
        if len(nbr) < 3:
            if valid[i]:
                labels[i] = planar_label(cloud.normals[i])
            continue
        nm = cloud.normals[nbr]
        mean = nm.mean(axis=0)
        mn = np.linalg.norm(mean)
        mean = mean / mn if mn > 0 else np.array([0.0, 0.0, 1.0])
        _, s, vt = np.linalg.svd(nm, full_matrices=False)
        spread2 = s[1] / s[0] if s[0] > 0 else 0.0
        spread3 = s[2] / s[0] if s[0] > 0 else 0.0
        if spread2 < tight_spread:
            labels[i] = planar_label(mean)
            continue
        axis = vt[2]
        if spread3 < 0.5 * spread2 and abs(axis[2]) < 0.35:
            # fan about one horizontal axis: cylinder, unless the fan is a
            # two-plane fold (angles cluster in two clumps with a big gap).
            # angles measured from the mean normal to stay off the atan2 cut
            ang = np.sort(np.arctan2(nm @ vt[1], nm @ mean))
            if len(ang) >= 4:
                gaps = np.diff(ang)
                span = ang[-1] - ang[0]
                if span > 1e-9 and gaps.max() > 0.6 * span:
                    labels[i] = planar_label(cloud.normals[i] if valid[i] else mean)
                    continue
            labels[i] = ShapeLabel.CYLINDRICAL
        elif spread2 < noise_spread:
            labels[i] = planar_label(mean)  # small isotropic spread: noise
        else:
            labels[i] = ShapeLabel.SPHERICAL

    for _ in range(smoothing_passes):
        smoothed = labels.copy()
        for i, nbr in enumerate(neighborhoods):
            votes = np.bincount(labels[nbr], minlength=4)
            smoothed[i] = int(votes.argmax())  # ties: lowest code
        labels = smoothed
    return Segmentation(labels, "geometric")
