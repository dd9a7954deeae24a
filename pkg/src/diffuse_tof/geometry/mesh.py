"""Triangle meshes, OBJ ingestion and a few procedural shapes."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ..exceptions import ConfigurationError, InvalidParameterError
from .rotation import Pose6D

logger = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-12  # m^2


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable triangle mesh in meters.

    Face normals follow the right-hand rule on the vertex winding.
    Degenerate triangles are dropped on construction with a warning.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise InvalidParameterError("mesh vertices must be finite")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise InvalidParameterError("triangle index out of range")
        areas = _triangle_areas(vertices, triangles)
        keep = areas > MIN_TRIANGLE_AREA
        if not np.all(keep):
            logger.warning("dropping %d degenerate triangle(s)", int((~keep).sum()))
            triangles = triangles[keep]
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def normals(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        n.setflags(write=False)
        return n

    @cached_property
    def areas(self) -> np.ndarray:
        return _triangle_areas(self.vertices, self.triangles)

    @property
    def surface_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def bvh(self):
        from .intersect import build_bvh

        return build_bvh(self.vertices, self.triangles)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()

    def sample_surface(self, n: int, seed: int = 0) -> np.ndarray:
        """Area-weighted uniform samples on the surface (deterministic per seed)."""
        rng = np.random.default_rng(seed)
        idx = rng.choice(self.n_triangles, size=n, p=self.areas / self.areas.sum())
        r1 = np.sqrt(rng.random(n))
        r2 = rng.random(n)
        v = self.vertices[self.triangles[idx]]
        return (
            (1 - r1)[:, None] * v[:, 0]
            + (r1 * (1 - r2))[:, None] * v[:, 1]
            + (r1 * r2)[:, None] * v[:, 2]
        )

    def model_points(self, max_points: int = 2048) -> np.ndarray:
        """Vertices used as metric model points, subsampled when dense."""
        if self.n_vertices <= max_points:
            return self.vertices.copy()
        idx = np.linspace(0, self.n_vertices - 1, max_points).round().astype(int)
        return self.vertices[idx].copy()


def _triangle_areas(vertices, triangles):
    if len(triangles) == 0:
        return np.zeros(0)
    v = vertices[triangles]
    return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def apply_pose(mesh: TriangleMesh, pose: Pose6D) -> TriangleMesh:
    """Rigidly transform every vertex; topology and winding are kept."""
    return TriangleMesh(pose.apply(mesh.vertices), mesh.triangles)


def merge_meshes(*meshes: TriangleMesh) -> TriangleMesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def load_obj(path, scale: float = 1.0) -> TriangleMesh:
    """Read the ``v``/``f`` subset of a Wavefront OBJ file.

    Polygons are fan-triangulated, negative indices are resolved relative to
    the vertices read so far, all other directives are ignored. ``scale`` is
    applied uniformly (e.g. ``1e-3`` for millimeter files).
    """
    path = Path(path)
    vertices, faces = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    vertices.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(vertices) + i)
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise ConfigurationError(f"{path}:{lineno}: malformed OBJ line {line.strip()!r}") from exc
    if not vertices or not faces:
        raise ConfigurationError(f"{path}: no vertices or faces found")
    return TriangleMesh(np.asarray(vertices) * scale, np.asarray(faces))


def save_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def box_mesh(size, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with outward-facing triangles."""
    sx, sy, sz = np.asarray(size, dtype=float) / 2
    c = np.asarray(center, dtype=float)
    corners = np.array(
        [[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)]
    ) + c
    # corner index = 4*ix + 2*iy + iz
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, c_, d in quads:
        tris += [(a, b, c_), (a, c_, d)]
    return TriangleMesh(corners, tris)


def asymmetric_test_mesh() -> TriangleMesh:
    """A chiral three-block object (about 9 x 6 x 5 cm) with no rotational symmetry.

    Vertices are expressed relative to the bounding-box center.
    """
    blocks = [
        box_mesh((0.09, 0.03, 0.02), center=(0.0, -0.015, -0.015)),
        box_mesh((0.03, 0.03, 0.02), center=(0.03, 0.015, -0.015)),
        box_mesh((0.03, 0.03, 0.03), center=(-0.03, -0.015, 0.01)),
    ]
    mesh = merge_meshes(*blocks)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    return TriangleMesh(mesh.vertices - (lo + hi) / 2, mesh.triangles)
