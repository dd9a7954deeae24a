"""Continuous 6D rotation parameterization and rigid poses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from ..exceptions import InvalidParameterError

_DEGENERATE_TOL = 1e-12


def _norm(x):
    # sqrt(x.x) instead of abs() keeps the map complex-analytic for complex-step derivatives
    return np.sqrt(np.sum(x * x, axis=-1, keepdims=True))


def rot6d_to_matrix(rot6) -> np.ndarray:
    """Map a 6-vector (two raw matrix columns) to a rotation matrix.

    The first column is normalized, the second is made orthogonal to it by
    Gram-Schmidt and normalized, the third is their cross product. Accepts
    batches of shape ``(..., 6)``; real or complex dtype.
    """
    rot6 = np.asarray(rot6)
    if rot6.shape[-1] != 6:
        raise InvalidParameterError(f"rot6 must have trailing dimension 6, got {rot6.shape}")
    a1 = rot6[..., 0:3]
    a2 = rot6[..., 3:6]
    n1 = _norm(a1)
    if np.any(np.abs(n1.real) <= _DEGENERATE_TOL):
        raise InvalidParameterError("rot6 has a zero first column")
    b1 = a1 / n1
    proj = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = _norm(proj)
    scale2 = np.abs(_norm(a2).real)
    if np.any(np.abs(n2.real) <= _DEGENERATE_TOL * np.maximum(scale2, 1.0)):
        raise InvalidParameterError("rot6 columns are zero or colinear")
    b2 = proj / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_rot6d(matrix) -> np.ndarray:
    """Inverse of :func:`rot6d_to_matrix` on SO(3): the first two columns."""
    matrix = np.asarray(matrix, dtype=float)
    return np.concatenate([matrix[..., :, 0], matrix[..., :, 1]], axis=-1)


def rot6d_jacobian(rot6, step: float = 1e-30) -> np.ndarray:
    """Exact Jacobian ``dR[a, b] / d rot6[m]`` with shape ``(3, 3, 6)``.

    Uses complex-step differentiation, which has no subtractive cancellation,
    so the result is accurate to machine precision.
    """
    rot6 = np.asarray(rot6, dtype=float)
    probes = rot6[None, :] + 1j * step * np.eye(6)
    mats = rot6d_to_matrix(probes)
    return np.moveaxis(mats.imag / step, 0, -1)


def random_rotation(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Rotation matrices drawn uniformly (Haar measure) from SO(3)."""
    return Rotation.random(size, random_state=rng).as_matrix()


@dataclass(frozen=True, eq=False)
class Pose6D:
    """Rigid transform ``x -> R x + t`` with ``R`` stored as a 6-vector."""

    rot6: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot6 = np.array(self.rot6, dtype=float).reshape(6)
        translation = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(rot6)) and np.all(np.isfinite(translation))):
            raise InvalidParameterError("pose contains non-finite values")
        rot6d_to_matrix(rot6)  # validates
        rot6.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rot6", rot6)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> Pose6D:
        return cls(np.array([1.0, 0, 0, 0, 1, 0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, rotation, translation=(0.0, 0.0, 0.0)) -> Pose6D:
        return cls(matrix_to_rot6d(rotation), translation)

    @property
    def rotation(self) -> np.ndarray:
        return rot6d_to_matrix(self.rot6)

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def inverse(self) -> Pose6D:
        r = self.rotation
        return Pose6D.from_matrix(r.T, -r.T @ self.translation)

    def compose(self, other: Pose6D) -> Pose6D:
        """``self ∘ other``: apply ``other`` first."""
        r = self.rotation
        return Pose6D.from_matrix(r @ other.rotation, r @ other.translation + self.translation)

    def __repr__(self):
        return f"Pose6D(rot6={self.rot6.tolist()}, translation={self.translation.tolist()})"
