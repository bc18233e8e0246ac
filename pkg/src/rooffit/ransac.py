"""Multi-cue RANSAC fitting of planes, spheres, and cylinders.

Scoring follows S = sum over inliers of W(p, model), where W multiplies
three Gaussian factors: point-to-surface distance, difference between the
point normal and the surface normal at the foot point, and difference
between the point color and the model's seed color.  Setting all sigmas
huge recovers conventional RANSAC (W = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .primitives import Cylinder, Plane, Sphere, canonical_upward

__all__ = [
    "RansacConfig",
    "FitResult",
    "point_weights",
    "point_weight",
    "fit_score",
    "ransac_plane",
    "ransac_sphere",
    "ransac_cylinder",
    "iterative_extract",
    "DegenerateSamples",
]


class DegenerateSamples(RuntimeError):
    """Every hypothesis sample was degenerate (collinear / coplanar / parallel)."""


@dataclass
class RansacConfig:
    sigma_dis: float = 0.5  # m, distance trade-off
    sigma_nv: float = 0.7  # normal-difference trade-off
    sigma_rgb: float = 30.0  # 8-bit color trade-off
    inlier_distance: float = 0.4  # m
    max_iterations: int = 500
    min_roof_points: int = 60
    max_mse: float = 0.25  # m^2
    segmented_ratio_stop: float = 0.98
    rng_seed: int = 0

    def __post_init__(self):
        positive = (
            "sigma_dis",
            "sigma_nv",
            "sigma_rgb",
            "inlier_distance",
            "max_iterations",
            "min_roof_points",
            "max_mse",
            "segmented_ratio_stop",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.segmented_ratio_stop > 1:
            raise ValueError("segmented_ratio_stop must be at most 1")


@dataclass
class FitResult:
    primitive: object
    inlier_indices: np.ndarray
    score: float
    mse: float


def point_weights(cloud: PointCloud, prim, cfg: RansacConfig) -> np.ndarray:
    """Per-point weight W = W_dis * W_nv * W_rgb in (0, 1].

    Points with an invalid (or absent) normal get a neutral W_nv = 1 and
    contribute through distance and color only.
    """
    d = prim.distance(cloud.xyz)
    w = np.exp(-(d**2) / cfg.sigma_dis**2)
    if cloud.normals is not None:
        valid = cloud.valid_normal_mask
        if valid.any():
            surf = prim.surface_normal_at(cloud.xyz[valid])
            diff2 = np.sum((cloud.normals[valid] - surf) ** 2, axis=1)
            w_nv = np.ones(cloud.n)
            w_nv[valid] = np.exp(-diff2 / cfg.sigma_nv**2)
            w = w * w_nv
    dc2 = np.sum((cloud.rgb - prim.seed_color) ** 2, axis=1)
    return w * np.exp(-dc2 / cfg.sigma_rgb**2)


def point_weight(cloud: PointCloud, index: int, prim, cfg: RansacConfig) -> float:
    """Weight of a single point of the cloud against a primitive."""
    return float(point_weights(cloud.subset([index]), prim, cfg)[0])


def fit_score(cloud: PointCloud, prim, cfg: RansacConfig):
    """(S, inlier indices): S sums inlier weights; inliers are points within
    cfg.inlier_distance of the surface."""
    d = prim.distance(cloud.xyz)
    inliers = np.nonzero(d <= cfg.inlier_distance)[0]
    if inliers.size == 0:
        return 0.0, inliers
    w = point_weights(cloud.subset(inliers), prim, cfg)
    return float(w.sum()), inliers


def _finalize(cloud, prim, cfg):
    d = prim.distance(cloud.xyz)
    inliers = np.nonzero(d <= cfg.inlier_distance)[0]
    if inliers.size == 0:
        return FitResult(prim, inliers, 0.0, np.inf)
    mse = float(np.mean(d[inliers] ** 2))
    w = point_weights(cloud.subset(inliers), prim, cfg)
    return FitResult(prim, inliers, float(w.sum()), mse)


def _refit_plane(cloud, indices, weights, seed_color):
    """Weighted total-least-squares plane through the given points."""
    pts = cloud.xyz[indices]
    w = np.asarray(weights, dtype=float)
    wsum = w.sum()
    if wsum <= 0 or len(pts) < 3:
        return None
    centroid = (w[:, None] * pts).sum(axis=0) / wsum
    centered = pts - centroid
    cov = (w[:, None] * centered).T @ centered / wsum
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[1] <= 1e-12 * max(eigvals[2], 1e-300):
        return None  # collinear support
    normal = canonical_upward(eigvecs[:, 0])
    return Plane(normal, float(normal @ centroid), seed_color)


def ransac_plane(cloud: PointCloud, cfg: RansacConfig, rng=None) -> FitResult:
    """Best-of-max_iterations plane, refined by weighted TLS over its inliers."""
    if cloud.n < 3:
        raise ValueError("plane fitting needs at least 3 points")
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    xyz = cloud.xyz
    n = cloud.n

    samples = np.empty((cfg.max_iterations, 3), dtype=int)
    for i in range(cfg.max_iterations):
        samples[i] = rng.choice(n, 3, replace=False)
    p0, p1, p2 = xyz[samples[:, 0]], xyz[samples[:, 1]], xyz[samples[:, 2]]
    normals = np.cross(p1 - p0, p2 - p0)
    norms = np.linalg.norm(normals, axis=1)
    extent = np.linalg.norm(p1 - p0, axis=1) * np.linalg.norm(p2 - p0, axis=1)
    good = norms > 1e-12 * np.maximum(extent, 1e-300)
    if not good.any():
        raise DegenerateSamples("all plane hypotheses were collinear samples")

    best_score, best = -1.0, None
    raw = normals[good] / norms[good, None]
    hyp_normals = canonical_upward(raw)  # match the upward point normals
    sign = np.where(np.einsum("ij,ij->i", hyp_normals, raw) < 0, -1.0, 1.0)
    hyp_offsets = sign * np.einsum("ij,ij->i", raw, p0[good])
    hyp_samples = samples[good]
    valid = cloud.valid_normal_mask if cloud.normals is not None else None
    # score all hypotheses in blocks: distances and both weight dot products
    # are plain matrix products against the hypothesis normals
    block = 128
    for lo in range(0, len(hyp_normals), block):
        hn = hyp_normals[lo : lo + block]  # (h, 3)
        hd = hyp_offsets[lo : lo + block]
        dist = np.abs(xyz @ hn.T - hd)  # (n, h)
        inl = dist <= cfg.inlier_distance
        w = np.exp(-(dist**2) / cfg.sigma_dis**2)
        if valid is not None and valid.any():
            # |n_p - n_h|^2 = 2 - 2 n_p.n_h for unit vectors
            dot = cloud.normals[valid] @ hn.T
            w_nv = np.exp(-(2.0 - 2.0 * dot) / cfg.sigma_nv**2)
            wv = np.ones((n, hn.shape[0]))
            wv[valid] = w_nv
            w = w * wv
        seed_cols = cloud.rgb[hyp_samples[lo : lo + block]].mean(axis=1)  # (h, 3)
        dc2 = (
            np.sum(cloud.rgb**2, axis=1)[:, None]
            - 2.0 * cloud.rgb @ seed_cols.T
            + np.sum(seed_cols**2, axis=1)[None, :]
        )
        w = w * np.exp(-dc2 / cfg.sigma_rgb**2)
        scores = np.where(inl, w, 0.0).sum(axis=0)
        j = int(scores.argmax())
        if scores[j] > best_score:
            best_score = float(scores[j])
            best = (hn[j], hd[j], seed_cols[j])

    prim = Plane(best[0], best[1], best[2])
    d = prim.distance(xyz)
    support = np.nonzero(d <= cfg.inlier_distance)[0]
    if support.size >= 3:
        w = point_weights(cloud.subset(support), prim, cfg)
        refined = _refit_plane(cloud, support, w, cloud.rgb[support].mean(axis=0))
        if refined is not None:
            refined.seed_color = cloud.rgb[support].mean(axis=0)
            prim = refined
    return _finalize(cloud, prim, cfg)


def _circumsphere(p):
    """Center/radius of the sphere through 4 points, or None if coplanar."""
    a = 2.0 * (p[1:] - p[0])
    b = np.sum(p[1:] ** 2, axis=1) - np.sum(p[0] ** 2)
    det = np.linalg.det(a)
    scale = np.abs(a).max()
    if scale == 0 or abs(det) < 1e-10 * scale**3:
        return None
    center = np.linalg.solve(a, b)
    return center, float(np.linalg.norm(p[0] - center))


def _gauss_newton(residual_jac, x0, max_steps=50, tol=1e-8):
    x = np.asarray(x0, dtype=float)
    for _ in range(max_steps):
        r, jac = residual_jac(x)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        x = x + step
        if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(x)):
            break
    return x


def _refine_sphere(xyz, center, radius):
    def rj(x):
        c, r = x[:3], x[3]
        v = xyz - c
        d = np.linalg.norm(v, axis=1)
        d = np.where(d < 1e-12, 1e-12, d)
        jac = np.empty((len(xyz), 4))
        jac[:, :3] = -v / d[:, None]
        jac[:, 3] = -1.0
        return d - r, jac

    x = _gauss_newton(rj, np.append(center, radius))
    return x[:3], float(abs(x[3]))


def _refine_cylinder(xyz, axis_point, axis_dir, radius):
    def rj(x):
        p0, a, r = x[:3], x[3:6], x[6]
        na = np.linalg.norm(a)
        ah = a / na
        u = xyz - p0
        along = u @ ah
        perp = u - np.outer(along, ah)
        d = np.linalg.norm(perp, axis=1)
        d = np.where(d < 1e-12, 1e-12, d)
        jac = np.empty((len(xyz), 7))
        jac[:, :3] = -perp / d[:, None]
        # dd/da through the normalized axis: dd/dah = -along * perp / d,
        # then dah/da = (I - ah ah^T)/|a|
        dd_dah = -(along[:, None] * perp) / d[:, None]
        proj = (np.eye(3) - np.outer(ah, ah)) / na
        jac[:, 3:6] = dd_dah @ proj
        jac[:, 6] = -1.0
        return d - r, jac

    x = _gauss_newton(rj, np.concatenate([axis_point, axis_dir, [radius]]))
    a = x[3:6]
    na = np.linalg.norm(a)
    if na < 1e-12:
        return axis_point, axis_dir, radius
    return x[:3], a / na, float(abs(x[6]))


def ransac_sphere(cloud: PointCloud, cfg: RansacConfig, rng=None) -> FitResult:
    """Iteratively sampled circumsphere hypotheses refined by Gauss-Newton."""
    if cloud.n < 4:
        raise ValueError("sphere fitting needs at least 4 points")
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    best_score, best = -1.0, None
    any_valid = False
    for _ in range(cfg.max_iterations):
        idx = rng.choice(cloud.n, 4, replace=False)
        sol = _circumsphere(cloud.xyz[idx])
        if sol is None:
            continue
        center, radius = sol
        if not (0.0 < radius < 1e4):
            continue
        any_valid = True
        prim = Sphere(center, radius, cloud.rgb[idx].mean(axis=0))
        s, _ = fit_score(cloud, prim, cfg)
        if s > best_score:
            best_score, best = s, prim
    if not any_valid:
        raise DegenerateSamples("all sphere hypotheses were coplanar samples")
    d = best.distance(cloud.xyz)
    support = d <= cfg.inlier_distance
    if support.sum() >= 5:
        center, radius = _refine_sphere(cloud.xyz[support], best.center, best.radius)
        best = Sphere(center, radius, cloud.rgb[support].mean(axis=0))
    return _finalize(cloud, best, cfg)


def ransac_cylinder(cloud: PointCloud, cfg: RansacConfig, rng=None) -> FitResult:
    """Two-point-with-normals hypotheses refined by Gauss-Newton."""
    if cloud.n < 2:
        raise ValueError("cylinder fitting needs at least 2 points")
    if cloud.normals is None or cloud.valid_normal_mask.sum() < 2:
        raise ValueError("cylinder fitting needs at least 2 points with normals")
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    candidates = np.nonzero(cloud.valid_normal_mask)[0]
    best_score, best = -1.0, None
    any_valid = False
    for _ in range(cfg.max_iterations):
        i, j = candidates[rng.choice(len(candidates), 2, replace=False)]
        n1, n2 = cloud.normals[i], cloud.normals[j]
        axis = np.cross(n1, n2)
        norm = np.linalg.norm(axis)
        if norm < 1e-6:
            continue  # parallel normals
        axis = axis / norm
        # intersect the two normal lines in the plane perpendicular to axis
        e1 = n1 - (n1 @ axis) * axis
        e2 = n2 - (n2 @ axis) * axis
        p1 = cloud.xyz[i] - (cloud.xyz[i] @ axis) * axis
        p2 = cloud.xyz[j] - (cloud.xyz[j] @ axis) * axis
        a = np.column_stack([e1, -e2])
        rhs = p2 - p1
        ts, res, rank, _ = np.linalg.lstsq(a, rhs, rcond=None)
        if rank < 2:
            continue
        center = 0.5 * (p1 + ts[0] * e1 + p2 + ts[1] * e2)
        radius = 0.5 * (
            np.linalg.norm(p1 - center) + np.linalg.norm(p2 - center)
        )
        if not (0.05 < radius < 1e4):
            continue
        any_valid = True
        prim = Cylinder(
            center + (cloud.xyz[i] @ axis) * axis,
            axis,
            radius,
            cloud.rgb[[i, j]].mean(axis=0),
        )
        s, _ = fit_score(cloud, prim, cfg)
        if s > best_score:
            best_score, best = s, prim
    if not any_valid:
        raise DegenerateSamples("all cylinder hypotheses had parallel normals")
    d = best.distance(cloud.xyz)
    support = d <= cfg.inlier_distance
    if support.sum() >= 6:
        p0, a, r = _refine_cylinder(
            cloud.xyz[support], best.axis_point, best.axis_dir, best.radius
        )
        best = Cylinder(p0, a, r, cloud.rgb[support].mean(axis=0))
    return _finalize(cloud, best, cfg)


_FITTERS = {"plane": ransac_plane, "sphere": ransac_sphere, "cylinder": ransac_cylinder}


def iterative_extract(
    cloud: PointCloud,
    cfg: RansacConfig,
    kind: str = "plane",
    rng_context: tuple = (),
) -> list[FitResult]:
    """Extract primitives until a stop threshold fires: segmented ratio
    reached, too few points left, or the best remaining fit too weak.

    Each extraction draws from its own RNG stream derived from
    (cfg.rng_seed, *rng_context, extraction index), so scheduling cannot
    change results.
    """
    fitter = _FITTERS[kind]
    remaining = np.arange(cloud.n)
    results = []
    extraction = 0
    while True:
        if len(remaining) < cfg.min_roof_points:
            break
        if 1.0 - len(remaining) / cloud.n >= cfg.segmented_ratio_stop:
            break
        rng = np.random.default_rng((cfg.rng_seed, *rng_context, extraction))
        sub = cloud.subset(remaining)
        try:
            fit = fitter(sub, cfg, rng=rng)
        except (DegenerateSamples, ValueError):
            break
        if fit.mse > cfg.max_mse or len(fit.inlier_indices) < cfg.min_roof_points:
            break
        results.append(
            FitResult(fit.primitive, remaining[fit.inlier_indices], fit.score, fit.mse)
        )
        keep = np.ones(len(remaining), dtype=bool)
        keep[fit.inlier_indices] = False
        remaining = remaining[keep]
        extraction += 1
    return results
