"""Scene and histogram containers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidParameterError
from ..geometry import PlacedMesh, Plane, TriangleMesh


@dataclass(frozen=True, eq=False)
class SceneModel:
    """One object, an optional supporting plane, and two Lambertian albedos."""

    placed_object: PlacedMesh | None = None
    plane: Plane | None = None
    albedo_object: float = 1.0
    albedo_plane: float = 1.0

    def __post_init__(self):
        if self.albedo_object < 0 or self.albedo_plane < 0:
            raise InvalidParameterError("albedos must be non-negative")
        object.__setattr__(self, "albedo_object", float(self.albedo_object))
        object.__setattr__(self, "albedo_plane", float(self.albedo_plane))

    @classmethod
    def from_mesh(cls, mesh: TriangleMesh | None, plane: Plane | None = None,
                  albedo_object: float = 1.0, albedo_plane: float = 1.0) -> SceneModel:
        placed = None if mesh is None else PlacedMesh(mesh)
        return cls(placed, plane, albedo_object, albedo_plane)

    @property
    def object_mesh(self) -> TriangleMesh | None:
        return None if self.placed_object is None else self.placed_object.world_mesh

    def transformed(self, rotation, translation) -> SceneModel:
        """The same scene under a world-frame rigid motion."""
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        placed = None
        if self.placed_object is not None:
            p = self.placed_object
            placed = PlacedMesh(p.template, rotation @ p.rotation, rotation @ p.translation + translation, p.scale)
        plane = None if self.plane is None else self.plane.transformed(rotation, translation)
        return SceneModel(placed, plane, self.albedo_object, self.albedo_plane)


@dataclass(frozen=True, eq=False)
class TransientHistogram:
    counts: np.ndarray
    bin_width_s: float
    sensor_id: int = 0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float).ravel()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())
