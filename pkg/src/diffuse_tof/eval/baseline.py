"""Idealized point-cloud sensors and point-to-point ICP registration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from ..exceptions import InvalidParameterError
from ..geometry import Part, Pose6D, TriangleMesh, trace_rays
from ..render import Rig, SceneModel, pixel_directions
from .metrics import compute_add

POINTCLOUD_MODES = ("single_pixel", "grid16")


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (N, 3) meters
    sensor_ids: np.ndarray  # (N,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvalidParameterError("point cloud coordinates must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "sensor_ids", np.asarray(self.sensor_ids, dtype=np.int64).reshape(-1))

    def __len__(self):
        return len(self.points)


def render_pointcloud(scene: SceneModel, rig: Rig, mode: str = "grid16") -> PointCloud:
    """Noise-free depth points of the object as seen by each sensor.

    ``single_pixel`` casts the optical axis only; ``grid16`` casts 16x16
    pixel-center rays over the sensor's field of view. Plane hits and misses
    are dropped.
    """
    if mode not in POINTCLOUD_MODES:
        raise InvalidParameterError(f"mode must be one of {POINTCLOUD_MODES}")
    origins, dirs, ids = [], [], []
    for s, (pose, spec) in enumerate(zip(rig.poses, rig.specs)):
        if mode == "single_pixel":
            local = np.array([[0.0, 0.0, 1.0]])
        else:
            local = pixel_directions(spec.half_tan, 16, 16)
        dirs.append(local @ pose.orientation.T)
        origins.append(np.broadcast_to(pose.position, (len(local), 3)))
        ids.append(np.full(len(local), s))
    origins, dirs, ids = np.concatenate(origins), np.concatenate(dirs), np.concatenate(ids)
    hits = trace_rays(scene.placed_object, scene.plane, origins, dirs)
    keep = hits.part == Part.OBJECT
    pts = origins[keep] + hits.distance[keep, None] * dirs[keep]
    return PointCloud(pts, ids[keep])


@dataclass(frozen=True, eq=False)
class IcpResult:
    pose: Pose6D
    history: np.ndarray  # RMS correspondence distance before each update
    iterations: int
    converged: bool


def _rigid_fit(src: np.ndarray, dst: np.ndarray, current_rot: np.ndarray):
    """Least-squares ``R, t`` with ``R src + t ~ dst`` (closed form).

    Fewer than three pairs cannot fix a rotation; ``current_rot`` is kept.
    """
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    if len(src) < 3:
        return current_rot, cd - current_rot @ cs
    rot, _ = Rotation.align_vectors(dst - cd, src - cs)
    r = rot.as_matrix()
    return r, cd - r @ cs


def icp_align(cloud, template: TriangleMesh, init: Pose6D, n_samples: int = 20000, seed: int = 0,
              max_iter: int = 100, tol: float = 1e-7) -> IcpResult:
    """Point-to-point ICP of ``cloud`` against area-weighted samples of ``template``.

    Each iteration matches every cloud point to its nearest template sample
    (under the current pose) and solves the rigid update in closed form.
    Stops when the RMS correspondence distance changes by less than ``tol``
    meters or after ``max_iter`` iterations. With fewer than three points
    only the translation is updated.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise InvalidParameterError("ICP needs a non-empty point cloud")
    samples = template.sample_surface(n_samples, seed)
    tree = cKDTree(samples)
    rot, trans = init.rotation, init.translation.copy()
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        local = (pts - trans) @ rot  # cloud in the template frame
        dist, idx = tree.query(local)
        history.append(float(np.sqrt(np.mean(dist**2))))
        if len(history) > 1 and abs(history[-2] - history[-1]) < tol:
            converged = True
            break
        rot, trans = _rigid_fit(samples[idx], pts, rot)
    return IcpResult(Pose6D.from_matrix(rot, trans), np.array(history), it, converged)


@dataclass(frozen=True)
class BaselineResult:
    mode: str
    n_points: int
    add: float
    pose: Pose6D | None


def run_baseline(gt, template: TriangleMesh, scene: SceneModel, rig: Rig, mode: str = "grid16",
                 init: Pose6D | None = None, model_points=None, **icp_kwargs) -> BaselineResult:
    """Point cloud of the true scene registered by ICP (initialized at ground truth by default).

    A cloud with no object points cannot be registered and scores ADD = inf.
    """
    cloud = render_pointcloud(scene, rig, mode)
    gt_pose = Pose6D(gt.rot6, gt.translation) if not isinstance(gt, Pose6D) else gt
    pts = template.model_points() if model_points is None else model_points
    if len(cloud) == 0:
        return BaselineResult(mode, 0, float("inf"), None)
    res = icp_align(cloud, template, gt_pose if init is None else init, **icp_kwargs)
    return BaselineResult(mode, len(cloud), compute_add(res.pose, gt_pose, pts), res.pose)
