"""Pose and shape error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..exceptions import InvalidParameterError

AUC_MAX_THRESHOLD = 0.10  # m


def _posed(pose, points: np.ndarray) -> np.ndarray:
    return points @ np.asarray(pose.rotation).T + np.asarray(pose.translation)


def _points(model_points) -> np.ndarray:
    pts = np.asarray(model_points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise InvalidParameterError("metrics need at least one model point")
    return pts


def compute_add(pred, gt, model_points) -> float:
    """Mean distance between corresponding model points under the two poses.

    ``pred`` and ``gt`` are anything with ``rotation`` and ``translation``
    (a :class:`Pose6D` or posed-mesh parameters).
    """
    pts = _points(model_points)
    return float(np.linalg.norm(_posed(pred, pts) - _posed(gt, pts), axis=1).mean())


def compute_add_s(pred, gt, model_points) -> float:
    """Mean distance from each predicted point to the nearest ground-truth point."""
    pts = _points(model_points)
    a, b = _posed(pred, pts), _posed(gt, pts)
    _, idx = cKDTree(b).query(a)
    return float(np.linalg.norm(a - b[idx], axis=1).mean())


def auc(errors, max_threshold: float = AUC_MAX_THRESHOLD) -> float:
    """Area under accuracy(t) = P(error <= t) for t in [0, max_threshold], scaled to 100.

    Integrates the empirical step function exactly: each error contributes
    ``max(0, max_threshold - e) / max_threshold``.
    """
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise InvalidParameterError("auc needs at least one error")
    if not max_threshold > 0:
        raise InvalidParameterError("max_threshold must be positive")
    # per-error fractions first, so that zero errors give exactly 100
    return float(100.0 * np.mean(np.clip(1.0 - e / max_threshold, 0.0, 1.0)))


def accuracy_curve(errors, max_threshold: float = AUC_MAX_THRESHOLD, n: int = 101) -> tuple[np.ndarray, np.ndarray]:
    """Threshold grid and fraction of errors at or below each threshold (for plotting)."""
    e = np.asarray(errors, dtype=float).ravel()
    t = np.linspace(0.0, max_threshold, n)
    return t, (e[None, :] <= t[:, None]).mean(axis=1)


def sphere_errors(pred, gt) -> tuple[float, float]:
    """Absolute diameter error and center distance (meters)."""
    return abs(float(pred.diameter) - float(gt.diameter)), float(np.linalg.norm(pred.center - gt.center))


@dataclass
class MetricReport:
    add: list[float] = field(default_factory=list)
    add_s: list[float] = field(default_factory=list)
    diameter_error: list[float] = field(default_factory=list)
    center_error: list[float] = field(default_factory=list)

    def add_pose(self, pred, gt, model_points):
        self.add.append(compute_add(pred, gt, model_points))
        self.add_s.append(compute_add_s(pred, gt, model_points))

    def add_sphere(self, pred, gt):
        d, c = sphere_errors(pred, gt)
        self.diameter_error.append(d)
        self.center_error.append(c)

    def summary(self) -> dict:
        out = {}
        if self.add:
            out.update(n=len(self.add), auc_add=auc(self.add), auc_add_s=auc(self.add_s),
                       median_add=float(np.median(self.add)), median_add_s=float(np.median(self.add_s)))
        if self.diameter_error:
            out.update(n_spheres=len(self.diameter_error),
                       mean_diameter_error=float(np.mean(self.diameter_error)),
                       mean_center_error=float(np.mean(self.center_error)))
        return out
