"""Free scene parameters and the parametric scene families they drive."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidParameterError
from ..geometry import PlacedMesh, Plane, Pose6D, TriangleMesh, rot6d_jacobian, rot6d_to_matrix, unit_icosphere
from ..render import SceneModel

ALBEDO_NAMES = ("albedo_object", "albedo_plane")


@dataclass(frozen=True, eq=False)
class PosedMeshParams:
    """6D pose (rotation as two raw columns) of a known mesh plus albedos."""

    rot6: np.ndarray
    translation: np.ndarray
    albedo_object: float = 1.0
    albedo_plane: float = 1.0

    kind = "posed_mesh"
    names = ("r00", "r10", "r20", "r01", "r11", "r21", "tx", "ty", "tz") + ALBEDO_NAMES

    def __post_init__(self):
        object.__setattr__(self, "rot6", np.array(self.rot6, dtype=float).reshape(6))
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float).reshape(3))
        if self.albedo_object < 0 or self.albedo_plane < 0:
            raise InvalidParameterError("albedos must be non-negative")

    @classmethod
    def from_pose(cls, pose: Pose6D, albedo_object=1.0, albedo_plane=1.0) -> PosedMeshParams:
        return cls(pose.rot6, pose.translation, albedo_object, albedo_plane)

    @property
    def pose(self) -> Pose6D:
        return Pose6D(self.rot6, self.translation)

    @property
    def rotation(self) -> np.ndarray:
        return rot6d_to_matrix(self.rot6)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.rot6, self.translation, [self.albedo_object, self.albedo_plane]])

    @classmethod
    def from_vector(cls, vec) -> PosedMeshParams:
        vec = np.asarray(vec, dtype=float)
        return cls(vec[0:6], vec[6:9], vec[9], vec[10])

    def with_albedos(self, albedo_object, albedo_plane) -> PosedMeshParams:
        return PosedMeshParams(self.rot6, self.translation, albedo_object, albedo_plane)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rot6": self.rot6.tolist(),
            "rotation_matrix": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "albedo_object": float(self.albedo_object),
            "albedo_plane": float(self.albedo_plane),
        }


@dataclass(frozen=True, eq=False)
class SphereParams:
    center: np.ndarray
    diameter: float
    albedo_object: float = 1.0
    albedo_plane: float = 1.0

    kind = "sphere"
    names = ("cx", "cy", "cz", "diameter") + ALBEDO_NAMES

    def __post_init__(self):
        object.__setattr__(self, "center", np.array(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "diameter", float(self.diameter))
        if not self.diameter > 0:
            raise InvalidParameterError("sphere diameter must be positive")
        if self.albedo_object < 0 or self.albedo_plane < 0:
            raise InvalidParameterError("albedos must be non-negative")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.center, [self.diameter, self.albedo_object, self.albedo_plane]])

    @classmethod
    def from_vector(cls, vec) -> SphereParams:
        vec = np.asarray(vec, dtype=float)
        return cls(vec[0:3], vec[3], vec[4], vec[5])

    def with_albedos(self, albedo_object, albedo_plane) -> SphereParams:
        return SphereParams(self.center, self.diameter, albedo_object, albedo_plane)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "center": self.center.tolist(),
            "diameter": self.diameter,
            "albedo_object": float(self.albedo_object),
            "albedo_plane": float(self.albedo_plane),
        }


SceneParams = PosedMeshParams | SphereParams


def params_from_dict(data: dict) -> SceneParams:
    kind = data.get("kind", "posed_mesh")
    albedos = (data.get("albedo_object", 1.0), data.get("albedo_plane", 1.0))
    if kind == "posed_mesh":
        if "rot6" in data:
            rot6 = data["rot6"]
        elif "rotation_matrix" in data:
            rot6 = Pose6D.from_matrix(data["rotation_matrix"]).rot6
        else:
            raise InvalidParameterError("posed_mesh params need 'rot6' or 'rotation_matrix'")
        return PosedMeshParams(rot6, data["translation"], *albedos)
    if kind == "sphere":
        return SphereParams(data["center"], data["diameter"], *albedos)
    raise InvalidParameterError(f"unknown parameter kind {kind!r}")


@dataclass(frozen=True, eq=False)
class PosedMeshModel:
    """Scene family: a known template mesh under a free rigid pose."""

    template: TriangleMesh
    plane: Plane | None = Plane()

    params_type = PosedMeshParams
    n_geometric = 9

    def scene(self, params: PosedMeshParams) -> SceneModel:
        placed = PlacedMesh(self.template, rot6d_to_matrix(params.rot6), params.translation)
        return SceneModel(placed, self.plane, params.albedo_object, params.albedo_plane)

    def vertex_jacobian(self, params: PosedMeshParams) -> np.ndarray:
        """``d world_vertex[v, a] / d (rot6, translation)``, shape ``(V, 3, 9)``."""
        d_rot = rot6d_jacobian(params.rot6)  # (3, 3, 6)
        u = self.template.vertices
        jac = np.zeros((len(u), 3, 9))
        jac[:, :, :6] = np.einsum("abm,vb->vam", d_rot, u)
        jac[:, :, 6:] = np.eye(3)
        return jac

    def model_points(self) -> np.ndarray:
        return self.template.model_points()


@dataclass(frozen=True, eq=False)
class SphereModel:
    """Scene family: a tessellated sphere with free center and diameter."""

    plane: Plane | None = Plane()
    tessellation_level: int = 3

    params_type = SphereParams
    n_geometric = 4

    def __post_init__(self):
        if self.tessellation_level < 2:
            raise InvalidParameterError("tessellation_level must be >= 2")

    @property
    def template(self) -> TriangleMesh:
        return unit_icosphere(self.tessellation_level)

    def scene(self, params: SphereParams) -> SceneModel:
        placed = PlacedMesh(self.template, None, params.center, 0.5 * params.diameter)
        return SceneModel(placed, self.plane, params.albedo_object, params.albedo_plane)

    def vertex_jacobian(self, params: SphereParams) -> np.ndarray:
        u = self.template.vertices
        jac = np.zeros((len(u), 3, 4))
        jac[:, :, :3] = np.eye(3)
        jac[:, :, 3] = 0.5 * u
        return jac
