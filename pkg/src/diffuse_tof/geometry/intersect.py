"""Ray casting against a placed triangle mesh and a supporting plane.

Closest-hit queries run through a bounding-volume hierarchy built once per
template mesh in its own frame; rays are mapped into that frame, so a pose
change costs a ray transform instead of a rebuild.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import NamedTuple

import numba
import numpy as np

from ..exceptions import InvalidParameterError
from .mesh import TriangleMesh
from .primitives import Plane

LEAF_SIZE = 4
_T_MIN = 1e-9


class Part(IntEnum):
    NONE = 0
    OBJECT = 1
    PLANE = 2


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.array(self.origin, dtype=float).reshape(3)
        d = np.array(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise InvalidParameterError("ray direction must be non-zero")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True, eq=False)
class Intersection:
    point: np.ndarray
    normal: np.ndarray
    distance: float
    part_id: Part
    barycentric: np.ndarray
    triangle_id: int


class BVH(NamedTuple):
    bbox_min: np.ndarray  # (n_nodes, 3)
    bbox_max: np.ndarray  # (n_nodes, 3)
    left: np.ndarray  # child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray  # leaf range into `order`
    count: np.ndarray
    order: np.ndarray  # triangle permutation


def build_bvh(vertices: np.ndarray, triangles: np.ndarray, leaf_size: int = LEAF_SIZE) -> BVH:
    """Median-split BVH over triangle centroids (longest centroid axis)."""
    tri_v = vertices[triangles]
    tmin = tri_v.min(axis=1)
    tmax = tri_v.max(axis=1)
    cent = tri_v.mean(axis=1)
    order = np.arange(len(triangles))

    bmin, bmax, left, right, start, count = [], [], [], [], [], []

    def new_node(lo, hi):
        idx = order[lo:hi]
        bmin.append(tmin[idx].min(axis=0))
        bmax.append(tmax[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        return len(bmin) - 1

    if len(triangles) == 0:
        empty = np.zeros((0, 3))
        z = np.zeros(0, dtype=np.int64)
        return BVH(empty, empty, z, z, z, z, z)

    stack = [(new_node(0, len(order)), 0, len(order))]
    while stack:
        node, lo, hi = stack.pop()
        if hi - lo <= leaf_size:
            continue
        c = cent[order[lo:hi]]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        sub = np.argsort(c[:, axis], kind="stable")
        order[lo:hi] = order[lo:hi][sub]
        mid = (lo + hi) // 2
        l_node = new_node(lo, mid)
        r_node = new_node(mid, hi)
        left[node], right[node] = l_node, r_node
        count[node] = 0
        stack.append((r_node, mid, hi))
        stack.append((l_node, lo, mid))

    return BVH(
        np.asarray(bmin),
        np.asarray(bmax),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64),
        np.asarray(count, dtype=np.int64),
        order.astype(np.int64),
    )


@numba.njit(cache=True, nogil=True)
def _closest_hits(origins, dirs, verts, tris, bmin, bmax, left, right, start, count, order,
                  out_tri, out_t, out_u, out_v):
    n_rays = origins.shape[0]
    stack = np.empty(128, dtype=np.int64)
    for r in range(n_rays):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        ix = 1.0 / dx if dx != 0.0 else 1e300
        iy = 1.0 / dy if dy != 0.0 else 1e300
        iz = 1.0 / dz if dz != 0.0 else 1e300
        best_t = np.inf
        best_tri = -1
        best_u = 0.0
        best_v = 0.0
        sp = 0
        if bmin.shape[0] > 0:
            stack[0] = 0
            sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            t0 = (bmin[node, 0] - ox) * ix
            t1 = (bmax[node, 0] - ox) * ix
            tn = min(t0, t1)
            tf = max(t0, t1)
            t0 = (bmin[node, 1] - oy) * iy
            t1 = (bmax[node, 1] - oy) * iy
            tn = max(tn, min(t0, t1))
            tf = min(tf, max(t0, t1))
            t0 = (bmin[node, 2] - oz) * iz
            t1 = (bmax[node, 2] - oz) * iz
            tn = max(tn, min(t0, t1))
            tf = min(tf, max(t0, t1))
            if tf < tn or tf < 0.0 or tn > best_t:
                continue
            if left[node] >= 0:
                stack[sp] = right[node]
                stack[sp + 1] = left[node]
                sp += 2
                continue
            for k in range(start[node], start[node] + count[node]):
                tri = order[k]
                a = tris[tri, 0]
                b = tris[tri, 1]
                c = tris[tri, 2]
                e1x = verts[b, 0] - verts[a, 0]
                e1y = verts[b, 1] - verts[a, 1]
                e1z = verts[b, 2] - verts[a, 2]
                e2x = verts[c, 0] - verts[a, 0]
                e2y = verts[c, 1] - verts[a, 1]
                e2z = verts[c, 2] - verts[a, 2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if abs(det) < 1e-24:
                    continue
                inv = 1.0 / det
                sx = ox - verts[a, 0]
                sy = oy - verts[a, 1]
                sz = oz - verts[a, 2]
                u = (sx * px + sy * py + sz * pz) * inv
                if u < 0.0 or u > 1.0:
                    continue
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv
                if v < 0.0 or u + v > 1.0:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv
                if t > 1e-12 and (t < best_t or (t == best_t and tri < best_tri)):
                    best_t = t
                    best_tri = tri
                    best_u = u
                    best_v = v
        out_tri[r] = best_tri
        out_t[r] = best_t
        out_u[r] = best_u
        out_v[r] = best_v


@dataclass(frozen=True, eq=False)
class PlacedMesh:
    """A template mesh under a similarity transform ``x -> s R x + t``."""

    template: TriangleMesh
    rotation: np.ndarray = None
    translation: np.ndarray = (0.0, 0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        rot = np.eye(3) if self.rotation is None else np.array(self.rotation, dtype=float)
        if rot.shape != (3, 3) or not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9):
            raise InvalidParameterError("rotation must be orthonormal")
        if not self.scale > 0:
            raise InvalidParameterError("scale must be positive")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float).reshape(3))
        object.__setattr__(self, "scale", float(self.scale))

    @cached_property
    def world_vertices(self) -> np.ndarray:
        v = self.scale * (self.template.vertices @ self.rotation.T) + self.translation
        v.setflags(write=False)
        return v

    @property
    def triangles(self) -> np.ndarray:
        return self.template.triangles

    @cached_property
    def world_mesh(self) -> TriangleMesh:
        return TriangleMesh(self.world_vertices, self.template.triangles)

    def to_template_frame(self, origins, directions):
        o = (np.asarray(origins) - self.translation) @ self.rotation / self.scale
        d = np.asarray(directions) @ self.rotation
        return o, d


class RayHits(NamedTuple):
    """Closest hits of a ray batch; ``distance`` is ``inf`` on a miss."""

    part: np.ndarray  # Part codes
    triangle: np.ndarray  # object triangle index, -1 otherwise
    distance: np.ndarray
    barycentric: np.ndarray  # (n, 3), object hits only


def intersect_plane(plane: Plane, origins, directions) -> np.ndarray:
    """Forward distance to the plane (inf on a miss), two-sided."""
    origins = np.asarray(origins, dtype=float)
    directions = np.asarray(directions, dtype=float)
    denom = directions @ plane.normal
    num = (plane.point - origins) @ plane.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    t = np.where((denom != 0) & (t > _T_MIN), t, np.inf)
    if plane.finite:
        hit = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * directions
        rel = hit - plane.point
        a = np.abs(rel @ plane.axis_u)
        b = np.abs(rel @ plane.axis_v)
        t = np.where((a <= plane.half_extents[0]) & (b <= plane.half_extents[1]), t, np.inf)
    return t


def intersect_placed_mesh(placed: PlacedMesh, origins, directions):
    """Closest object hit per ray: ``(triangle, world distance, u, v)``."""
    o, d = placed.to_template_frame(origins, directions)
    n = len(o)
    tri = np.empty(n, dtype=np.int64)
    t = np.empty(n)
    u = np.empty(n)
    v = np.empty(n)
    bvh = placed.template.bvh
    _closest_hits(
        np.ascontiguousarray(o), np.ascontiguousarray(d),
        placed.template.vertices, placed.template.triangles,
        bvh.bbox_min, bvh.bbox_max, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order,
        tri, t, u, v,
    )
    return tri, t * placed.scale, u, v


def trace_rays(placed: PlacedMesh | None, plane: Plane | None, origins, directions) -> RayHits:
    """Nearest positive-distance hit over object and plane for each ray."""
    origins = np.asarray(origins, dtype=float)
    directions = np.asarray(directions, dtype=float)
    n = len(directions)
    if origins.shape == (3,):
        origins = np.broadcast_to(origins, (n, 3))
    part = np.zeros(n, dtype=np.int64)
    dist = np.full(n, np.inf)
    tri = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    if placed is not None and placed.template.n_triangles:
        t_tri, t_obj, u, v = intersect_placed_mesh(placed, origins, directions)
        hit = t_tri >= 0
        part[hit] = Part.OBJECT
        dist[hit] = t_obj[hit]
        tri[hit] = t_tri[hit]
        bary[hit] = np.stack([1 - u[hit] - v[hit], u[hit], v[hit]], axis=1)
    if plane is not None:
        t_pl = intersect_plane(plane, origins, directions)
        closer = t_pl < dist
        part[closer] = Part.PLANE
        dist[closer] = t_pl[closer]
        tri[closer] = -1
        bary[closer] = 0.0
    return RayHits(part, tri, dist, bary)


def intersect_ray(ray: Ray, scene) -> Intersection | None:
    """First intersection of one ray with ``scene`` (object mesh and plane)."""
    placed = getattr(scene, "placed_object", None)
    plane = getattr(scene, "plane", None)
    hits = trace_rays(placed, plane, ray.origin[None], ray.direction[None])
    part = Part(int(hits.part[0]))
    if part is Part.NONE:
        return None
    dist = float(hits.distance[0])
    point = ray.origin + dist * ray.direction
    if part is Part.OBJECT:
        tri = int(hits.triangle[0])
        v = placed.world_vertices[placed.triangles[tri]]
        n = np.cross(v[1] - v[0], v[2] - v[0])
        return Intersection(point, n / np.linalg.norm(n), dist, part, hits.barycentric[0].copy(), tri)
    return Intersection(point, plane.normal.copy(), dist, part, np.zeros(3), -1)


def intersect_brute_force(mesh: TriangleMesh, origins, directions):
    """All-triangle Möller-Trumbore in plain numpy; reference for the BVH.

    Returns ``(triangle, distance)`` with ``-1``/``inf`` on a miss.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    v = mesh.vertices[mesh.triangles]
    v0 = v[:, 0][None]
    e1 = (v[:, 1] - v[:, 0])[None]
    e2 = (v[:, 2] - v[:, 0])[None]
    d = directions[:, None, :]
    p = np.cross(d, e2)
    det = np.sum(e1 * p, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        s = origins[:, None, :] - v0
        u = np.sum(s * p, axis=-1) * inv
        q = np.cross(s, e1)
        w = np.sum(d * q, axis=-1) * inv
        t = np.sum(e2 * q, axis=-1) * inv
        ok = (np.abs(det) >= 1e-24) & (u >= 0) & (u <= 1) & (w >= 0) & (u + w <= 1) & (t > 1e-12)
    t = np.where(ok, t, np.inf)
    best = np.argmin(t, axis=1)
    dist = t[np.arange(len(t)), best]
    return np.where(np.isfinite(dist), best, -1), dist
