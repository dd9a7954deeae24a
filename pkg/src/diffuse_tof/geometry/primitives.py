"""Parametric primitives: the supporting plane and the tessellated sphere."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..exceptions import InvalidParameterError
from .mesh import TriangleMesh


@dataclass(frozen=True, eq=False)
class Plane:
    """Supporting surface, infinite unless ``half_extents`` is given.

    A finite plane is the rectangle ``point + a*u + b*v`` with
    ``|a| <= half_extents[0]`` and ``|b| <= half_extents[1]`` where ``u`` and
    ``v`` span the plane orthogonally to ``normal``.
    """

    point: np.ndarray = (0.0, 0.0, 0.0)
    normal: np.ndarray = (0.0, 0.0, 1.0)
    half_extents: tuple[float, float] | None = None
    axis_u: np.ndarray | None = None

    def __post_init__(self):
        point = np.array(self.point, dtype=float).reshape(3)
        normal = np.array(self.normal, dtype=float).reshape(3)
        nn = np.linalg.norm(normal)
        if not nn > 0:
            raise InvalidParameterError("plane normal must be non-zero")
        normal = normal / nn
        if self.axis_u is None:
            helper = np.array([1.0, 0, 0]) if abs(normal[0]) < 0.9 else np.array([0, 1.0, 0])
            u = helper - helper.dot(normal) * normal
        else:
            u = np.array(self.axis_u, dtype=float).reshape(3)
            u = u - u.dot(normal) * normal
        u /= np.linalg.norm(u)
        if self.half_extents is not None:
            he = tuple(float(x) for x in self.half_extents)
            if len(he) != 2 or min(he) <= 0:
                raise InvalidParameterError("half_extents must be two positive lengths")
            object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "axis_u", u)

    @property
    def axis_v(self) -> np.ndarray:
        return np.cross(self.normal, self.axis_u)

    @property
    def finite(self) -> bool:
        return self.half_extents is not None

    def signed_distance(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.point) @ self.normal

    def transformed(self, rotation, translation) -> Plane:
        rotation = np.asarray(rotation, dtype=float)
        return Plane(
            rotation @ self.point + np.asarray(translation, dtype=float),
            rotation @ self.normal,
            self.half_extents,
            rotation @ self.axis_u,
        )


@dataclass(frozen=True)
class SphereOnPlane:
    center: tuple[float, float, float]
    diameter: float
    tessellation_level: int = 3

    def __post_init__(self):
        if not self.diameter > 0:
            raise InvalidParameterError("sphere diameter must be positive")
        if self.tessellation_level < 2:
            raise InvalidParameterError("tessellation_level must be >= 2")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@lru_cache(maxsize=8)
def unit_icosphere(level: int) -> TriangleMesh:
    """Icosahedron subdivided ``level`` times, vertices on the unit sphere."""
    t = (1 + 5**0.5) / 2
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(verts), np.array(faces))


def tessellate_sphere(sphere: SphereOnPlane) -> TriangleMesh:
    """Vertices ``center + diameter/2 * u_i`` for fixed unit directions ``u_i``."""
    unit = unit_icosphere(sphere.tessellation_level)
    verts = np.asarray(sphere.center) + 0.5 * sphere.diameter * unit.vertices
    return TriangleMesh(verts, unit.triangles)
