"""Pipeline orchestration and per-stage subcommands.

The `run` command chains preprocess -> cluster -> segment -> fit ->
assemble -> evaluate with per-stage artifacts under the output directory
and a manifest for resumption.  Every other subcommand runs one stage on
explicit paths.  Configuration is a flat key=value text file; dotted keys
address module parameters (e.g. ransac.sigma_dis=0.5).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import PointCloud, ShapeLabel, estimate_normals
from .cluster import BuildingCluster, apply_mask, euclidean_cluster
from .io import read_point_cloud, write_point_cloud
from .metrics import EvalReport, render_models, score_2d, score_3d
from .model import assemble as assemble_model
from .model import export_mesh, intersect_adjacent, read_mesh, trace_boundary, RoofSegment
from .preprocess import PreprocessConfig, extract_dtm, fill_holes, smooth
from .primitives import Cylinder, Plane, Sphere
from .pyramid import hierarchical_segment
from .ransac import FitResult, RansacConfig, iterative_extract
from .raster import RasterGrid, read_raster, write_raster
from .segment import (
    geometric_fallback_classify,
    load_labels,
    read_labels,
    write_labels,
)
from .synth import generate_training_set


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


@dataclass
class PipelineConfig:
    cloud: str = ""
    mask: str = ""
    truth_mask: str = ""
    truth_dsm: str = ""
    label_dir: str = ""
    out_dir: str = "out"
    jobs: int = 1
    seed: int = 0
    cluster_tolerance: float = 2.0
    cluster_min_points: int = 100
    cluster_min_height: float = 2.0  # above-DTM height a building must reach
    eval_resolution: float = 1.0
    eval_z_tolerance: float = 1.0
    model_alpha: float = 0.0  # 0 = auto (2x mean point spacing)
    model_adjacency_gap: float = 1.0
    pyramid_base_grid: float = 0.5
    pyramid_max_levels: int = 3
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)


_DOTTED = {"preprocess": PreprocessConfig, "ransac": RansacConfig}


def load_config(path) -> PipelineConfig:
    cfg = PipelineConfig()
    sub = {name: {} for name in _DOTTED}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        if "." in key:
            section, attr = key.split(".", 1)
            if section in sub:
                sub[section][attr] = value
                continue
            key = f"{section}_{attr}"
        key = key.replace(".", "_")
        if not hasattr(cfg, key):
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
        current = getattr(cfg, key)
        setattr(cfg, key, type(current)(value) if not isinstance(current, str) else value)
    for name, cls in _DOTTED.items():
        if sub[name]:
            defaults = getattr(cfg, name)
            kwargs = {}
            for f in fields(cls):
                if f.name in sub[name]:
                    kwargs[f.name] = type(getattr(defaults, f.name))(sub[name][f.name])
            setattr(cfg, name, replace(defaults, **kwargs))
    return cfg


def _digest(paths=(), extra="") -> str:
    h = hashlib.sha256()
    h.update(extra.encode())
    for p in paths:
        p = Path(p)
        h.update(str(p).encode())
        if p.exists():
            h.update(p.read_bytes())
    return h.hexdigest()


class Manifest:
    def __init__(self, path):
        self.path = Path(path)
        self.data = {"version": __version__, "stages": {}}
        if self.path.exists():
            try:
                self.data = json.loads(self.path.read_text())
            except json.JSONDecodeError:
                pass
        self.data.setdefault("stages", {})

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def fresh(self, stage, input_hash, resume):
        entry = self.data["stages"].get(stage)
        if not resume or not entry:
            return False
        if entry.get("status") != "done" or entry.get("input_hash") != input_hash:
            return False
        return all(Path(p).exists() for p in entry.get("outputs", []))

    def record(self, stage, input_hash, outputs, seconds, status="done"):
        self.data["stages"][stage] = {
            "status": status,
            "input_hash": input_hash,
            "outputs": [str(p) for p in outputs],
            "seconds": round(seconds, 3),
        }
        self.save()


def _parallel_map(fn, items, jobs):
    """Map preserving order; results independent of scheduling."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# fit serialization
# --------------------------------------------------------------------------


def _primitive_to_dict(prim):
    if isinstance(prim, Plane):
        return {"kind": "plane", "normal": prim.normal.tolist(),
                "offset": prim.offset, "seed_color": prim.seed_color.tolist()}
    if isinstance(prim, Sphere):
        return {"kind": "sphere", "center": prim.center.tolist(),
                "radius": prim.radius, "seed_color": prim.seed_color.tolist()}
    return {"kind": "cylinder", "axis_point": prim.axis_point.tolist(),
            "axis_dir": prim.axis_dir.tolist(), "radius": prim.radius,
            "seed_color": prim.seed_color.tolist()}


def _primitive_from_dict(d):
    if d["kind"] == "plane":
        return Plane(d["normal"], d["offset"], d["seed_color"])
    if d["kind"] == "sphere":
        return Sphere(d["center"], d["radius"], d["seed_color"])
    return Cylinder(d["axis_point"], d["axis_dir"], d["radius"], d["seed_color"])


def save_fits(fits, labels, path):
    payload = []
    for fit, label in zip(fits, labels):
        payload.append(
            {
                "primitive": _primitive_to_dict(fit.primitive),
                "inliers": fit.inlier_indices.tolist(),
                "score": fit.score,
                "mse": fit.mse,
                "label": int(label),
            }
        )
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_fits(path):
    payload = json.loads(Path(path).read_text())
    fits, labels = [], []
    for item in payload:
        fits.append(
            FitResult(
                _primitive_from_dict(item["primitive"]),
                np.asarray(item["inliers"], dtype=int),
                item["score"],
                item["mse"],
            )
        )
        labels.append(ShapeLabel(item["label"]))
    return fits, labels


# --------------------------------------------------------------------------
# stage implementations
# --------------------------------------------------------------------------


def _mean_spacing(cloud: PointCloud) -> float:
    """Lattice-equivalent point spacing sqrt(area / n) over the footprint."""
    span = cloud.xyz[:, :2].max(axis=0) - cloud.xyz[:, :2].min(axis=0)
    area = max(float(span[0] * span[1]), 1e-9)
    return float(np.sqrt(area / max(cloud.n, 1)))


def prepare_cluster(cloud: PointCloud, pre_cfg: PreprocessConfig) -> PointCloud:
    """Per-building cleanup: fill holes and estimate normals."""
    filled = fill_holes(cloud, pre_cfg)
    k = min(16, max(3, filled.n - 1))
    if filled.n > k:
        filled = estimate_normals(filled, k=k)
    return filled


def _group_rms(cloud, fits):
    """RMS of each point's distance to its nearest fitted surface."""
    if not fits:
        return np.inf
    d = np.min(
        np.column_stack([f.primitive.distance(cloud.xyz) for f in fits]), axis=1
    )
    return float(np.sqrt(np.mean(d**2)))


def fit_cluster(cluster: BuildingCluster, cfg: PipelineConfig):
    """Fit curved primitives per curved label, then planes hierarchically.

    Ridge folds between roof planes masquerade as cylinders once normal
    estimation smooths the crease, so each curved label group must beat a
    plane-only explanation of the same points (clearly lower whole-group
    RMS) to keep its curved fits; otherwise the group is folded back into
    the planar pass.  Failed or implausible curved fits go back as well.
    """
    cloud = cluster.cloud
    labels = cloud.labels.copy()
    rcfg = replace(cfg.ransac, rng_seed=cfg.seed)
    results, result_labels = [], []
    for label, kind, rmin, rmax in (
        (ShapeLabel.CYLINDRICAL, "cylinder", 1.0, 200.0),
        (ShapeLabel.SPHERICAL, "sphere", 1.5, 400.0),
    ):
        idx = np.nonzero(labels == int(label))[0]
        if len(idx) < rcfg.min_roof_points:
            labels[idx] = int(ShapeLabel.SLOPED)
            continue
        sub = cloud.subset(idx)
        fits = iterative_extract(sub, rcfg, kind, rng_context=(cluster.id, int(label)))
        fits = [f for f in fits if rmin <= f.primitive.radius <= rmax]
        plane_fits = iterative_extract(
            sub, rcfg, "plane", rng_context=(cluster.id, int(label), 1)
        )
        if _group_rms(sub, fits) >= 0.7 * _group_rms(sub, plane_fits):
            labels[idx] = int(ShapeLabel.SLOPED)  # planes explain it as well
            continue
        fitted = np.zeros(len(idx), dtype=bool)
        for fit in fits:
            results.append(
                FitResult(fit.primitive, idx[fit.inlier_indices], fit.score, fit.mse)
            )
            result_labels.append(label)
            fitted[fit.inlier_indices] = True
        labels[idx[~fitted]] = int(ShapeLabel.SLOPED)
    relabeled = BuildingCluster(
        cluster.id, cloud.with_labels(labels), cluster.bbox, cluster.indices
    )
    planar_fits = hierarchical_segment(
        relabeled,
        rcfg,
        base_grid=cfg.pyramid_base_grid,
        max_levels=cfg.pyramid_max_levels,
    )
    for fit in planar_fits:
        results.append(fit)
        nz = abs(fit.primitive.normal[2])
        result_labels.append(
            ShapeLabel.FLAT if nz > np.cos(np.radians(10)) else ShapeLabel.SLOPED
        )
    return results, result_labels


def assemble_cluster(cluster_cloud, fits, labels, dtm, cfg: PipelineConfig):
    alpha = cfg.model_alpha or 2.0 * _mean_spacing(cluster_cloud)
    segments = []
    for fit, label in zip(fits, labels):
        inliers = cluster_cloud.subset(fit.inlier_indices)
        try:
            ring = trace_boundary(inliers, alpha)
        except ValueError:
            continue
        segments.append(RoofSegment(fit.primitive, ring, label, inliers))
    if not segments:
        return None
    segments = intersect_adjacent(segments, cfg.model_adjacency_gap)
    return assemble_model(segments, dtm)


def merge_meshes(paths, out_path):
    verts_all, faces_all = [], []
    offset = 0
    for p in paths:
        v, f = read_mesh(p)
        if len(v) == 0:
            continue
        verts_all.append(v)
        faces_all.append(f + offset)
        offset += len(v)
    if not verts_all:
        raise ValueError("no meshes to merge")
    with open(out_path, "w") as fh:
        for v in np.vstack(verts_all):
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in np.vstack(faces_all):
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# --------------------------------------------------------------------------
# the run pipeline
# --------------------------------------------------------------------------


def run_pipeline(cfg: PipelineConfig, resume: bool = False) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out / "manifest.json")
    manifest.data["seed"] = cfg.seed
    manifest.data["versions"] = {
        "rooffit": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
    }
    stage = "load"
    try:
        # ---- load ----
        t0 = time.perf_counter()
        for required, path in (("cloud", cfg.cloud), ("mask", cfg.mask)):
            if not path or not Path(path).exists():
                raise StageError("load", f"missing {required} file: {path!r}")
        ihash = _digest([cfg.cloud, cfg.mask], repr((cfg.seed,)))
        cloud = read_point_cloud(cfg.cloud)
        mask = read_raster(cfg.mask)
        manifest.record("load", ihash, [], time.perf_counter() - t0)

        # ---- preprocess ----
        stage = "preprocess"
        t0 = time.perf_counter()
        smoothed_path = out / "smoothed.txt"
        dtm_path = out / "dtm.asc"
        ihash = _digest([cfg.cloud], repr(cfg.preprocess))
        if not manifest.fresh(stage, ihash, resume):
            smoothed = smooth(cloud, cfg.preprocess)
            write_point_cloud(smoothed, smoothed_path)
            dtm = extract_dtm(smoothed, cfg.preprocess)
            write_raster(dtm, dtm_path)
            manifest.record(stage, ihash, [smoothed_path, dtm_path],
                            time.perf_counter() - t0)
        smoothed = read_point_cloud(smoothed_path)
        dtm = read_raster(dtm_path)

        # ---- cluster (+ hole filling + normals per building) ----
        stage = "cluster"
        t0 = time.perf_counter()
        cluster_dir = out / "clusters"
        ihash = _digest(
            [smoothed_path, cfg.mask],
            repr(
                (
                    cfg.cluster_tolerance,
                    cfg.cluster_min_points,
                    cfg.cluster_min_height,
                    cfg.preprocess,
                )
            ),
        )
        listing = cluster_dir / "clusters.json"
        if not manifest.fresh(stage, ihash, resume):
            cluster_dir.mkdir(exist_ok=True)
            masked = apply_mask(smoothed, mask)
            clusters = euclidean_cluster(
                masked, cfg.cluster_tolerance, cfg.cluster_min_points
            )
            # mask slop lets ground slivers through; a building must stand
            # clear of the terrain
            def above_ground(c):
                terrain = dtm.value_at(c.cloud.xyz[:, 0], c.cloud.xyz[:, 1])
                return float(np.median(c.cloud.xyz[:, 2] - terrain))

            clusters = [
                c for c in clusters if above_ground(c) >= cfg.cluster_min_height
            ]
            for new_id, c in enumerate(clusters):
                c.id = new_id
            prepared = _parallel_map(
                lambda c: prepare_cluster(c.cloud, cfg.preprocess), clusters, cfg.jobs
            )
            names = []
            for c, ready in zip(clusters, prepared):
                p = cluster_dir / f"c{c.id:04d}.txt"
                write_point_cloud(ready, p)
                names.append(p.name)
            listing.write_text(json.dumps(names) + "\n")
            outputs = [listing] + [cluster_dir / n for n in names]
            manifest.record(stage, ihash, outputs, time.perf_counter() - t0)
        names = json.loads(listing.read_text())
        clusters = []
        for cid, name in enumerate(names):
            c = read_point_cloud(cluster_dir / name)
            x, y = c.xyz[:, 0], c.xyz[:, 1]
            clusters.append(
                BuildingCluster(cid, c, (x.min(), y.min(), x.max(), y.max()),
                                np.arange(c.n))
            )

        # ---- segment ----
        stage = "segment"
        t0 = time.perf_counter()
        label_dir = out / "labels"
        ihash = _digest(
            [listing], repr((cfg.label_dir, [n for n in names]))
        )
        if not manifest.fresh(stage, ihash, resume):
            label_dir.mkdir(exist_ok=True)

            def label_one(cluster):
                if cfg.label_dir:
                    ext = Path(cfg.label_dir) / f"c{cluster.id:04d}.labels"
                    seg = load_labels(cluster, ext)
                else:
                    seg = geometric_fallback_classify(cluster)
                return seg.labels

            all_labels = _parallel_map(label_one, clusters, cfg.jobs)
            outputs = [label_dir / f"c{c.id:04d}.labels" for c in clusters]
            for c, labels in zip(clusters, all_labels):
                write_labels(labels, label_dir / f"c{c.id:04d}.labels")
            manifest.record(stage, ihash, outputs, time.perf_counter() - t0)
        labeled = []
        for c in clusters:
            labels = read_labels(label_dir / f"c{c.id:04d}.labels")
            labeled.append(
                BuildingCluster(c.id, c.cloud.with_labels(labels), c.bbox, c.indices)
            )
        clusters = labeled

        # ---- fit ----
        stage = "fit"
        t0 = time.perf_counter()
        fit_dir = out / "fits"
        ihash = _digest(
            [label_dir / f"c{c.id:04d}.labels" for c in clusters],
            repr((cfg.ransac, cfg.seed, cfg.pyramid_base_grid, cfg.pyramid_max_levels))
            + _digest([listing]),
        )
        if not manifest.fresh(stage, ihash, resume):
            fit_dir.mkdir(exist_ok=True)
            all_fits = _parallel_map(
                lambda c: fit_cluster(c, cfg), clusters, cfg.jobs
            )
            outputs = []
            for c, (fits, flabels) in zip(clusters, all_fits):
                p = fit_dir / f"c{c.id:04d}.json"
                save_fits(fits, flabels, p)
                outputs.append(p)
            manifest.record(stage, ihash, outputs, time.perf_counter() - t0)

        # ---- assemble ----
        stage = "assemble"
        t0 = time.perf_counter()
        mesh_dir = out / "meshes"
        fit_paths = [fit_dir / f"c{c.id:04d}.json" for c in clusters]
        ihash = _digest(
            fit_paths + [dtm_path],
            repr((cfg.model_alpha, cfg.model_adjacency_gap)),
        )
        scene_mesh = out / "scene.mesh"
        if not manifest.fresh(stage, ihash, resume):
            mesh_dir.mkdir(exist_ok=True)

            def build_one(args):
                cluster, fit_path = args
                fits, flabels = load_fits(fit_path)
                if not fits:
                    return None
                return assemble_cluster(cluster.cloud, fits, flabels, dtm, cfg)

            models = _parallel_map(
                build_one, list(zip(clusters, fit_paths)), cfg.jobs
            )
            outputs = []
            mesh_paths = []
            for c, model in zip(clusters, models):
                if model is None:
                    continue
                p = mesh_dir / f"c{c.id:04d}.mesh"
                export_mesh(model, p)
                outputs.append(p)
                mesh_paths.append(p)
            if mesh_paths:
                merge_meshes(mesh_paths, scene_mesh)
                outputs.append(scene_mesh)
            manifest.record(stage, ihash, outputs, time.perf_counter() - t0)
        else:
            fitlab = [load_fits(p) for p in fit_paths]
            models = [
                assemble_cluster(c.cloud, f, l, dtm, cfg) if f else None
                for c, (f, l) in zip(clusters, fitlab)
            ]
        models = [m for m in models if m is not None]

        # ---- evaluate ----
        if cfg.truth_mask and cfg.truth_dsm:
            stage = "evaluate"
            t0 = time.perf_counter()
            truth_mask = read_raster(cfg.truth_mask)
            truth_dsm = read_raster(cfg.truth_dsm)
            pred_mask, pred_dsm = render_models(
                models, dtm, cfg.eval_resolution, like=truth_mask
            )
            write_raster(pred_mask, out / "pred_mask.asc")
            write_raster(pred_dsm, out / "pred_dsm.asc")
            comp2, corr2, iou2 = score_2d(pred_mask, truth_mask)
            comp3, corr3, iou3 = score_3d(
                pred_dsm, truth_dsm, pred_mask, truth_mask, cfg.eval_z_tolerance
            )
            report = EvalReport(comp2, corr2, iou2, comp3, corr3, iou3,
                                cfg.eval_z_tolerance)
            (out / "report.txt").write_text(report.to_text())
            print(report.to_text(), end="")
            manifest.record(
                stage,
                _digest([cfg.truth_mask, cfg.truth_dsm]),
                [out / "report.txt"],
                time.perf_counter() - t0,
            )
    except StageError as e:
        manifest.record(e.stage, "", [], 0.0, status="failed")
        print(f"error: stage {e.stage}: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # keep partial artifacts, mark the stage
        manifest.record(stage, "", [], 0.0, status="failed")
        print(f"error: stage {stage}: {e}", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    return run_pipeline(cfg, resume=args.resume)


def _cmd_preprocess(args):
    cfg = PreprocessConfig()
    cloud = read_point_cloud(args.inp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    smoothed = smooth(cloud, cfg)
    write_point_cloud(smoothed, out / "smoothed.txt")
    write_raster(extract_dtm(smoothed, cfg), out / "dtm.asc")
    print(f"wrote {out / 'smoothed.txt'} and {out / 'dtm.asc'}")
    return 0


def _cmd_cluster(args):
    cloud = read_point_cloud(args.inp)
    mask = read_raster(args.mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    masked = apply_mask(cloud, mask)
    clusters = euclidean_cluster(masked, args.tolerance, args.min_points)
    for c in clusters:
        write_point_cloud(c.cloud, out / f"c{c.id:04d}.txt")
    print(f"{len(clusters)} clusters -> {out}")
    return 0


def _cmd_synth(args):
    from .scenes import generate_village

    rng = np.random.default_rng(args.seed)
    if args.flat_dir and args.sloped_dir:
        flats = [read_point_cloud(p) for p in sorted(Path(args.flat_dir).glob("*.txt"))]
        sloped = [read_point_cloud(p) for p in sorted(Path(args.sloped_dir).glob("*.txt"))]
    else:
        # built-in sources: flat and sloped sheets whose noise matches what
        # the pipeline feeds the segmenter (clusters cut from the smoothed
        # cloud), i.e. ~0.1 m RMS
        flats, sloped = [], []
        for z in (5.0, 8.0):
            xy = rng.uniform(0, 40, (12000, 2))
            zs = z + rng.normal(0, 0.12, len(xy))
            rgb = np.clip(rng.normal(140, 20, (len(xy), 3)), 0, 255)
            flats.append(PointCloud(np.column_stack([xy, zs]), rgb,
                                    labels=np.zeros(len(xy), dtype=np.int32)))
        for tilt in (0.3, 0.45):
            xy = rng.uniform(0, 40, (12000, 2))
            zs = 6.0 + tilt * xy[:, 0] + rng.normal(0, 0.12, len(xy))
            rgb = np.clip(rng.normal(120, 20, (len(xy), 3)), 0, 255)
            sloped.append(PointCloud(np.column_stack([xy, zs]), rgb,
                                     labels=np.ones(len(xy), dtype=np.int32)))
    manifest = generate_training_set(
        flats, sloped, args.count, args.out, rng_seed=args.seed
    )
    print(f"manifest: {manifest}")
    return 0


def _cmd_segment_export(args):
    cloud = read_point_cloud(args.inp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mask:
        cloud = apply_mask(cloud, read_raster(args.mask))
        clusters = euclidean_cluster(cloud, args.tolerance, args.min_points)
    else:
        x, y = cloud.xyz[:, 0], cloud.xyz[:, 1]
        clusters = [
            BuildingCluster(0, cloud, (x.min(), y.min(), x.max(), y.max()),
                            np.arange(cloud.n))
        ]
    for c in clusters:
        write_point_cloud(c.cloud, out / f"c{c.id:04d}.txt")
    print(f"exported {len(clusters)} cluster clouds -> {out}")
    return 0


def _cmd_segment_import(args):
    cluster_dir = Path(args.clusters)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for cloud_path in sorted(cluster_dir.glob("c*.txt")):
        label_path = Path(args.labels) / (cloud_path.stem + ".labels")
        if not label_path.exists():
            raise SystemExit(f"error: no label file for {cloud_path.name}")
        cloud = read_point_cloud(cloud_path)
        labels = read_labels(label_path)
        if len(labels) != cloud.n:
            raise SystemExit(
                f"error: {label_path.name}: {len(labels)} labels for "
                f"{cloud.n} points"
            )
        write_point_cloud(cloud.with_labels(labels), out / cloud_path.name)
        count += 1
    print(f"attached labels to {count} clusters -> {out}")
    return 0


def _cmd_fit(args):
    cloud = read_point_cloud(args.inp)
    if cloud.labels is None:
        raise SystemExit("error: fit needs a labeled cluster file")
    if cloud.normals is None:
        cloud = estimate_normals(cloud, k=min(16, max(3, cloud.n - 1)))
    x, y = cloud.xyz[:, 0], cloud.xyz[:, 1]
    cluster = BuildingCluster(0, cloud, (x.min(), y.min(), x.max(), y.max()),
                              np.arange(cloud.n))
    cfg = PipelineConfig(seed=args.seed)
    fits, labels = fit_cluster(cluster, cfg)
    save_fits(fits, labels, args.out)
    for fit, label in zip(fits, labels):
        prim = fit.primitive
        desc = _primitive_to_dict(prim)
        kind = desc.pop("kind")
        print(
            f"{kind} label={label.name} inliers={len(fit.inlier_indices)} "
            f"score={fit.score:.2f} mse={fit.mse:.4f}"
        )
    print(f"saved {len(fits)} fits -> {args.out}")
    return 0


def _cmd_assemble(args):
    cloud = read_point_cloud(args.cluster)
    fits, labels = load_fits(args.inp)
    dtm = read_raster(args.dtm)
    cfg = PipelineConfig()
    model = assemble_cluster(cloud, fits, labels, dtm, cfg)
    if model is None:
        raise SystemExit("error: no usable roof segments")
    export_mesh(model, args.out)
    print(f"mesh -> {args.out}")
    return 0


def _cmd_eval(args):
    pred_mask = read_raster(args.pred_mask)
    truth_mask = read_raster(args.truth_mask)
    pred_dsm = read_raster(args.pred_dsm)
    truth_dsm = read_raster(args.truth_dsm)
    try:
        comp2, corr2, iou2 = score_2d(pred_mask, truth_mask)
        comp3, corr3, iou3 = score_3d(
            pred_dsm, truth_dsm, pred_mask, truth_mask, args.z_tol
        )
    except ValueError as e:
        raise SystemExit(f"error: {e}")
    report = EvalReport(comp2, corr2, iou2, comp3, corr3, iou3, args.z_tol)
    if args.out:
        Path(args.out).write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rooffit",
        description="Building reconstruction from photogrammetric point clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("preprocess", help="smooth a cloud and extract the DTM")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("cluster", help="mask and split a cloud into buildings")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tolerance", type=float, default=2.0)
    p.add_argument("--min-points", type=int, default=100)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("synth", help="generate a labeled training set")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flat-dir", default="")
    p.add_argument("--sloped-dir", default="")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("segment-export", help="write per-cluster clouds for inference")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mask", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--tolerance", type=float, default=2.0)
    p.add_argument("--min-points", type=int, default=100)
    p.set_defaults(func=_cmd_segment_export)

    p = sub.add_parser("segment-import", help="attach label files to clusters")
    p.add_argument("--clusters", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_segment_import)

    p = sub.add_parser("fit", help="fit primitives to one labeled cluster")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("assemble", help="build a mesh from fits + cluster + DTM")
    p.add_argument("--in", dest="inp", required=True, help="fits JSON")
    p.add_argument("--cluster", required=True)
    p.add_argument("--dtm", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_assemble)

    p = sub.add_parser("eval", help="score predicted mask/DSM against references")
    p.add_argument("--pred-mask", required=True)
    p.add_argument("--pred-dsm", required=True)
    p.add_argument("--truth-mask", required=True)
    p.add_argument("--truth-dsm", required=True)
    p.add_argument("--z-tol", type=float, default=1.0)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
