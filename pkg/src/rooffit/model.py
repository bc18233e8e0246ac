"""Watertight building models: boundary tracing, ridge intersection,
facade draping, and mesh export."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely
from scipy.spatial import Delaunay, QhullError, cKDTree
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.ops import unary_union

from .cloud import PointCloud, ShapeLabel
from .primitives import Plane
from .raster import RasterGrid

__all__ = [
    "RoofSegment",
    "BuildingModel",
    "trace_boundary",
    "intersect_adjacent",
    "assemble",
    "export_mesh",
    "read_mesh",
]


@dataclass
class RoofSegment:
    primitive: object
    boundary: np.ndarray  # (m, 2) CCW ring, first vertex not repeated
    label: ShapeLabel
    inliers: Optional[PointCloud] = None
    coplanar_with: list = field(default_factory=list)
    mesh_vertices: Optional[np.ndarray] = None  # (v, 3), filled by assemble
    mesh_faces: Optional[np.ndarray] = None  # (f, 3) indices


@dataclass
class BuildingModel:
    roofs: list
    facades: list  # (4, 3) quads: top a, top b, bottom b, bottom a
    ground_height: float
    ground_rings: list  # list of (m, 2) CCW rings of the union footprint


def _ring_area(ring):
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _cross2(a, b):
    """z-component of the 2D cross product, elementwise."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _alpha_boundary(xy, alpha):
    """Outer boundary ring of the alpha shape (circumradius <= alpha)."""
    tri = Delaunay(xy)
    simplices = tri.simplices
    a = xy[simplices[:, 0]]
    b = xy[simplices[:, 1]]
    c = xy[simplices[:, 2]]
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(a - c, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    area2 = np.abs(
        (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
        - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        circum = la * lb * lc / (2.0 * area2)
    keep = (area2 > 0) & (circum <= alpha)
    if not keep.any():
        return None
    kept = simplices[keep]
    # orient every triangle CCW so boundary edges come out CCW on the
    # outer ring
    av, bv, cv = xy[kept[:, 0]], xy[kept[:, 1]], xy[kept[:, 2]]
    cwise = (bv[:, 0] - av[:, 0]) * (cv[:, 1] - av[:, 1]) - (
        bv[:, 1] - av[:, 1]
    ) * (cv[:, 0] - av[:, 0])
    flip = cwise < 0
    kept[flip] = kept[flip][:, [0, 2, 1]]
    edges = {}
    for t in kept:
        for i, j in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            if (j, i) in edges:
                del edges[(j, i)]
            elif (i, j) in edges:
                del edges[(i, j)]  # non-manifold duplicate, drop both
            else:
                edges[(i, j)] = True
    nxt = {}
    for i, j in edges:
        nxt.setdefault(i, []).append(j)
    loops = []
    used = set()
    for start in sorted(nxt):
        if start in used:
            continue
        loop = [start]
        used.add(start)
        cur = start
        ok = True
        while True:
            outs = [j for j in nxt.get(cur, []) if (cur, j) in edges]
            outs = [j for j in outs if j not in used or j == start]
            if not outs:
                ok = False
                break
            cur = outs[0]
            if cur == start:
                break
            loop.append(cur)
            used.add(cur)
        if ok and len(loop) >= 3:
            loops.append(np.asarray(loop))
    if not loops:
        return None
    ring = max(loops, key=lambda lp: abs(_ring_area(xy[lp])))
    ring_xy = xy[ring]
    if _ring_area(ring_xy) < 0:
        ring_xy = ring_xy[::-1]
    return ring_xy


def _dp_open(points, tol):
    """Douglas-Peucker on an open chain, keeping both endpoints."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        a, b = points[lo], points[hi]
        ab = b - a
        lab = np.linalg.norm(ab)
        seg = points[lo + 1 : hi]
        if lab < 1e-12:
            d = np.linalg.norm(seg - a, axis=1)
        else:
            d = np.abs(_cross2(ab, seg - a)) / lab
        imax = int(np.argmax(d))
        if d[imax] > tol:
            mid = lo + 1 + imax
            keep[mid] = True
            stack.append((lo, mid))
            stack.append((mid, hi))
    return keep


def _relax_ring(ring, tol):
    """Greedily drop ring vertices that deviate under tol from the chord
    joining their neighbors (cleans up Douglas-Peucker's forced anchors)."""
    pts = [p for p in ring]
    while len(pts) > 3:
        m = len(pts)
        best_i, best_d = -1, tol
        for i in range(m):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % m]
            chord = c - a
            lc = np.linalg.norm(chord)
            d = np.linalg.norm(b - a) if lc < 1e-12 else abs(_cross2(chord, b - a)) / lc
            if d <= best_d:
                best_i, best_d = i, d
        if best_i < 0:
            break
        pts.pop(best_i)
    return np.asarray(pts)


def _simplify_ring(ring, tol):
    """Douglas-Peucker for a closed ring, anchored at two extreme vertices.

    The vertex farthest from the centroid is (nearly always) a true corner,
    which keeps the forced DP anchors off the middle of walls.
    """
    if len(ring) <= 4:
        return ring
    start = int(np.argmax(np.linalg.norm(ring - ring.mean(axis=0), axis=1)))
    ring = np.roll(ring, -start, axis=0)
    far = int(np.argmax(np.linalg.norm(ring - ring[0], axis=1)))
    if far == 0:
        return ring
    first = np.concatenate([ring[: far + 1]])
    second = np.concatenate([ring[far:], ring[:1]])
    k1 = _dp_open(first, tol)
    k2 = _dp_open(second, tol)
    out = np.vstack([first[k1][:-1], second[k2][:-1]])
    return _relax_ring(out, tol)


def _dominant_direction(ring):
    """Strongest edge direction modulo 90 degrees (length weighted)."""
    edges = np.roll(ring, -1, axis=0) - ring
    lengths = np.linalg.norm(edges, axis=1)
    ang = np.arctan2(edges[:, 1], edges[:, 0])
    s = np.sum(lengths * np.sin(4 * ang))
    c = np.sum(lengths * np.cos(4 * ang))
    return 0.25 * np.arctan2(s, c)


def _regularize_ring(ring, theta, snap_deg=15.0, merge_tol=0.5, min_edge=None):
    """Snap edges near the two dominant orthogonal directions onto them,
    merge collinear runs, drop leftover short diagonal edges, and rebuild
    vertices as consecutive line intersections."""
    m = len(ring)
    lines = []  # [unit dir, midpoint, supported length, snapped?]
    for i in range(m):
        a, b = ring[i], ring[(i + 1) % m]
        e = b - a
        le = np.linalg.norm(e)
        if le < 1e-12:
            continue
        ang = np.arctan2(e[1], e[0])
        snapped = False
        for base in (theta, theta + np.pi / 2):
            diff = (ang - base + np.pi / 2) % np.pi - np.pi / 2
            if abs(np.degrees(diff)) <= snap_deg:
                ang = base
                snapped = True
                break
        d = np.array([np.cos(ang), np.sin(ang)])
        lines.append([d, 0.5 * (a + b), le, snapped])
    if len(lines) < 3:
        return ring
    # merge consecutive near-collinear edges (same line within merge_tol)
    merged = []
    for d, mid, le, sn in lines:
        if merged:
            pd, pm, pl, psn = merged[-1]
            if abs(_cross2(pd, d)) < 1e-9 and abs(_cross2(pd, mid - pm)) <= merge_tol:
                w = le / (le + pl)
                merged[-1] = [pd, pm + w * (mid - pm), pl + le, psn or sn]
                continue
        merged.append([d, mid, le, sn])
    if len(merged) > 2:
        d, mid, le, sn = merged[0]
        pd, pm, pl, psn = merged[-1]
        if abs(_cross2(pd, d)) < 1e-9 and abs(_cross2(pd, pm - mid)) <= merge_tol:
            w = pl / (le + pl)
            merged[0] = [d, mid + w * (pm - mid), pl + le, psn or sn]
            merged.pop()
    # DP anchors and concave corners leave short diagonal stubs between two
    # snapped walls; drop them and let the walls intersect
    if min_edge is None:
        min_edge = 4.0 * merge_tol
    changed = True
    while changed and len(merged) > 3:
        changed = False
        for i in sorted(range(len(merged)), key=lambda j: merged[j][2]):
            d, mid, le, sn = merged[i]
            if sn or le >= min_edge:
                continue
            if abs(_cross2(merged[i - 1][0], merged[(i + 1) % len(merged)][0])) < 1e-9:
                continue  # parallel neighbors cannot absorb the stub
            merged.pop(i)
            changed = True
            break
    k = len(merged)
    if k < 3:
        return ring
    verts = []
    for i in range(k):
        d1, m1, l1 = merged[i][0], merged[i][1], merged[i][2]
        d2, m2, l2 = merged[(i + 1) % k][0], merged[(i + 1) % k][1], merged[(i + 1) % k][2]
        denom = _cross2(d1, d2)
        if abs(denom) < 1e-9:
            verts.append(0.5 * (m1 + m2))
            continue
        t = _cross2(m2 - m1, d2) / denom
        s = _cross2(m2 - m1, d1) / denom
        reach = l1 + l2
        if abs(t) > reach or abs(s) > reach:
            verts.append(0.5 * (m1 + m2))  # near-parallel: join at midpoints
            continue
        verts.append(m1 + t * d1)
    out = np.asarray(verts)
    if _ring_area(out) < 0:
        out = out[::-1]
    return out


def trace_boundary(points, alpha: float) -> np.ndarray:
    """CCW outer boundary polygon of the (x, y) projection.

    Alpha-shape tracing at circumradius `alpha`, Douglas-Peucker
    simplification at alpha/2, then dominant-direction regularization
    (edges within 15 degrees of the two orthogonal dominant directions are
    snapped onto them).  `points` is a PointCloud or an (n, >=2) array.
    """
    xy = points.xyz[:, :2] if isinstance(points, PointCloud) else np.asarray(points)[:, :2]
    xy = np.unique(xy, axis=0)
    if len(xy) < 3:
        raise ValueError("boundary tracing needs at least 3 distinct points")
    spread = xy - xy.mean(axis=0)
    if np.linalg.matrix_rank(spread, tol=1e-9) < 2:
        raise ValueError("boundary tracing needs non-collinear points")
    if len(xy) == 3:
        ring = xy if _ring_area(xy) > 0 else xy[::-1]
        return ring
    ring = None
    best = None
    a = float(alpha)
    span = xy.max(axis=0) - xy.min(axis=0)
    bbox_area = float(span[0] * span[1])
    for _ in range(5):  # alpha too small fragments the shape; relax
        try:
            ring = _alpha_boundary(xy, a)
        except QhullError:
            ring = None
        if ring is not None:
            if abs(_ring_area(ring)) > 0.3 * bbox_area:
                break
            if best is None or abs(_ring_area(ring)) > abs(_ring_area(best)):
                best = ring
        ring = None
        a *= 2.0
    if ring is None:
        ring = best  # sliver footprints never reach the bbox ratio
    if ring is None:
        raise ValueError("alpha shape produced no usable boundary; alpha too small")
    simplified = _simplify_ring(ring, alpha / 2.0)
    theta = _dominant_direction(simplified)
    regular = _regularize_ring(simplified, theta, merge_tol=alpha / 2.0)
    poly = ShapelyPolygon(regular)
    if not poly.is_valid or poly.area <= 0:
        return simplified  # regularization broke the ring; keep the raw one
    return regular


def _segment_min_distance(a: PointCloud, b: PointCloud) -> float:
    d, _ = cKDTree(b.xyz).query(a.xyz, k=1)
    return float(d.min())


def intersect_adjacent(roofs: list, adjacency_gap: float = 1.0) -> list:
    """Snap boundaries of adjacent planar segments onto their plane-plane
    intersection lines (ridges/valleys).

    Segments whose inlier sets come within `adjacency_gap` in 3D are
    adjacent.  Near-parallel adjacent planes are flagged coplanar and left
    untouched.  Boundary vertices close to the projected intersection line
    (and inside the pair's overlap span) are projected onto it.
    """
    out = [
        RoofSegment(
            r.primitive,
            r.boundary.copy(),
            r.label,
            r.inliers,
            list(r.coplanar_with),
        )
        for r in roofs
    ]
    planar = [i for i, r in enumerate(out) if isinstance(r.primitive, Plane)]
    snap_tol = 2.0 * adjacency_gap
    for ai in range(len(planar)):
        for bi in range(ai + 1, len(planar)):
            i, j = planar[ai], planar[bi]
            ri, rj = out[i], out[j]
            if ri.inliers is None or rj.inliers is None:
                continue
            if _segment_min_distance(ri.inliers, rj.inliers) > adjacency_gap:
                continue
            n1, n2 = ri.primitive.normal, rj.primitive.normal
            line_dir = np.cross(n1, n2)
            norm = np.linalg.norm(line_dir)
            if norm < np.sin(np.radians(5.0)):
                ri.coplanar_with.append(j)
                rj.coplanar_with.append(i)
                continue
            line_dir /= norm
            # a point on the intersection line
            a = np.array([n1, n2, line_dir])
            b = np.array([ri.primitive.offset, rj.primitive.offset, 0.0])
            p0 = np.linalg.solve(a, b)
            u = line_dir[:2]
            lu = np.linalg.norm(u)
            if lu < 1e-9:
                continue  # vertical ridge line: no 2D trace
            u = u / lu
            q0 = p0[:2]
            spans = []
            for seg in (ri, rj):
                t = (seg.boundary - q0) @ u
                dist = np.abs(_cross2(np.broadcast_to(u, seg.boundary.shape), seg.boundary - q0))
                near = dist <= snap_tol
                if near.any():
                    spans.append((t[near].min(), t[near].max()))
            if len(spans) < 2:
                continue
            t_lo = max(spans[0][0], spans[1][0])
            t_hi = min(spans[0][1], spans[1][1])
            if t_hi <= t_lo:
                continue
            for seg in (ri, rj):
                bnd = seg.boundary
                t = (bnd - q0) @ u
                dist = np.abs(_cross2(np.broadcast_to(u, bnd.shape), bnd - q0))
                move = (dist <= snap_tol) & (t >= t_lo - snap_tol) & (t <= t_hi + snap_tol)
                if not move.any():
                    continue
                snapped = bnd.copy()
                snapped[move] = q0 + np.outer(t[move], u)
                poly = ShapelyPolygon(snapped)
                if poly.is_valid and poly.area > 0:
                    seg.boundary = snapped
    return out


def _ear_clip(ring):
    """Triangulate a simple CCW polygon by ear clipping; returns index triples."""
    n = len(ring)
    if n < 3:
        return []
    idx = list(range(n))
    tris = []
    guard = 0
    while len(idx) > 3 and guard < 4 * n * n:
        guard += 1
        found = False
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[(k - 1) % m], idx[k], idx[(k + 1) % m]
            a, b, c = ring[i0], ring[i1], ring[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-12:
                continue  # reflex or degenerate corner
            ear = True
            for other in idx:
                if other in (i0, i1, i2):
                    continue
                p = ring[other]
                s1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                s2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
                s3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
                if s1 >= -1e-12 and s2 >= -1e-12 and s3 >= -1e-12:
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                idx.pop(k)
                found = True
                break
        if not found:
            break
    if len(idx) == 3:
        tris.append(tuple(idx))
    return tris


def _tessellate_curved(segment, max_chord_dev=0.5):
    """Sample the curved surface inside the boundary and triangulate."""
    prim = segment.primitive
    radius = prim.radius
    spacing = max(0.25, np.sqrt(max(8.0 * max_chord_dev * radius, 1e-6)) / 2.0)
    poly = ShapelyPolygon(segment.boundary)
    minx, miny, maxx, maxy = poly.bounds
    xs = np.arange(minx, maxx + spacing, spacing)
    ys = np.arange(miny, maxy + spacing, spacing)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    inner = shapely.contains_xy(poly.buffer(-0.25 * spacing), pts[:, 0], pts[:, 1])
    verts2d = np.vstack([segment.boundary, pts[inner]])
    tri = Delaunay(verts2d)
    centroids = verts2d[tri.simplices].mean(axis=1)
    keep = shapely.contains_xy(poly.buffer(1e-9), centroids[:, 0], centroids[:, 1])
    faces = tri.simplices[keep]
    z = prim.height_at(verts2d, clamp=True)
    z = np.where(np.isfinite(z), z, np.nanmin(z[np.isfinite(z)]) if np.isfinite(z).any() else 0.0)
    verts = np.column_stack([verts2d, z])
    # orient faces upward
    e1 = verts[faces[:, 1]] - verts[faces[:, 0]]
    e2 = verts[faces[:, 2]] - verts[faces[:, 0]]
    up = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    flip = up < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return verts, faces


def _tessellate_planar(segment):
    ring = segment.boundary
    z = segment.primitive.height_at(ring)
    if np.any(~np.isfinite(z)):
        raise ValueError("near-vertical roof plane cannot be draped")
    verts = np.column_stack([ring, z])
    faces = np.asarray(_ear_clip(ring), dtype=int)
    return verts, faces


def assemble(
    roofs: list,
    dtm: RasterGrid,
    max_chord_dev: float = 0.5,
    shared_edge_tol: float = 0.4,
) -> BuildingModel:
    """Drape facades from exterior roof edges to the terrain and close the
    model with the union-footprint ground polygon.

    All facade bottoms sit at one per-building ground height (the minimum
    DTM sample under the footprint) so the model is watertight on any
    terrain.
    """
    if not roofs:
        raise ValueError("no roof segments to assemble")
    roofs = [
        RoofSegment(r.primitive, r.boundary, r.label, r.inliers, list(r.coplanar_with))
        for r in roofs
    ]
    polys = []
    for seg in roofs:
        if isinstance(seg.primitive, Plane):
            seg.mesh_vertices, seg.mesh_faces = _tessellate_planar(seg)
        else:
            seg.mesh_vertices, seg.mesh_faces = _tessellate_curved(
                seg, max_chord_dev
            )
        polys.append(ShapelyPolygon(seg.boundary))

    # ground height: minimum DTM sample across footprint vertices/midpoints
    samples = []
    for seg in roofs:
        ring = seg.boundary
        mids = 0.5 * (ring + np.roll(ring, -1, axis=0))
        for q in np.vstack([ring, mids]):
            v = dtm.value_at(q[0], q[1])
            samples.append(float(v))
    samples = np.asarray(samples)
    if np.any(samples == dtm.nodata):
        raise ValueError("footprint extends outside the DTM")
    ground_height = float(samples.min())

    boundaries = [shapely.LineString(np.vstack([p, p[:1]])) for p in
                  (seg.boundary for seg in roofs)]
    facades = []
    for si, seg in enumerate(roofs):
        ring = seg.boundary
        zs = seg.primitive.height_at(ring, clamp=True)
        if np.any(zs < ground_height - 1e-6):
            raise ValueError("roof boundary dips below the terrain")
        m = len(ring)
        for i in range(m):
            a2, b2 = ring[i], ring[(i + 1) % m]
            mid = 0.5 * (a2 + b2)
            shared = False
            for sj, other in enumerate(boundaries):
                if sj == si:
                    continue
                if other.distance(shapely.Point(mid)) <= shared_edge_tol:
                    shared = True
                    break
            if shared:
                continue
            a3 = np.array([a2[0], a2[1], zs[i]])
            b3 = np.array([b2[0], b2[1], zs[(i + 1) % m]])
            facades.append(
                np.array(
                    [
                        a3,
                        b3,
                        [b2[0], b2[1], ground_height],
                        [a2[0], a2[1], ground_height],
                    ]
                )
            )

    union = unary_union([p.buffer(0) for p in polys])
    rings = []
    geoms = getattr(union, "geoms", [union])
    for geom in geoms:
        if geom.is_empty:
            continue
        ext = np.asarray(geom.exterior.coords)[:-1]
        if _ring_area(ext) < 0:
            ext = ext[::-1]
        rings.append(ext)
    return BuildingModel(roofs, facades, ground_height, rings)


def _mesh_triangles(model: BuildingModel):
    """Yield (3, 3) world-space triangles with outward winding."""
    for seg in model.roofs:
        v, f = seg.mesh_vertices, seg.mesh_faces
        for tri in f:
            yield v[tri]
    for quad in model.facades:
        a_top, b_top, b_bot, a_bot = quad
        # boundary rings are CCW seen from above; winding the quad this way
        # points the facade normal out of the building
        yield np.array([b_top, a_top, a_bot])
        yield np.array([b_top, a_bot, b_bot])
    for ring in model.ground_rings:
        tris = _ear_clip(ring)
        for i0, i1, i2 in tris:
            # ground faces down: clockwise seen from above
            yield np.array(
                [
                    [ring[i0][0], ring[i0][1], model.ground_height],
                    [ring[i2][0], ring[i2][1], model.ground_height],
                    [ring[i1][0], ring[i1][1], model.ground_height],
                ]
            )


def export_mesh(model: BuildingModel, path) -> None:
    """ASCII triangle mesh: `v x y z` lines then 1-indexed `f i j k` lines."""
    tris = list(_mesh_triangles(model))
    if not tris:
        raise ValueError("model has no triangles to export")
    index = {}
    order = []
    faces = []
    for tri in tris:
        face = []
        for p in tri:
            key = (repr(float(p[0])), repr(float(p[1])), repr(float(p[2])))
            if key not in index:
                index[key] = len(order)
                order.append(key)
            face.append(index[key])
        faces.append(face)
    with open(path, "w") as f:
        for key in order:
            f.write(f"v {key[0]} {key[1]} {key[2]}\n")
        for i, j, k in faces:
            f.write(f"f {i + 1} {j + 1} {k + 1}\n")


def read_mesh(path):
    """Read the ASCII mesh back as (vertices (v, 3), faces (f, 3))."""
    verts, faces = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(t) for t in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(t) - 1 for t in parts[1:4]])
    return np.asarray(verts), np.asarray(faces, dtype=int)
