"""Histogram Jacobians w.r.t. scene parameters, and a finite-difference oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..geometry import trace_rays
from ..render import Rig, RigRays, convolve_jitter, prepare_rays, render_parts, split_sensors
from .params import PosedMeshModel, SceneParams, SphereModel

ParametricModel = PosedMeshModel | SphereModel


@dataclass(frozen=True, eq=False)
class GradientRecord:
    """Rendered histograms ``(S, B)`` and their Jacobian ``(S, B, P)``.

    Columns follow ``names``: geometric parameters, then the two albedos.
    """

    value: np.ndarray
    jacobian: np.ndarray
    names: tuple[str, ...]

    def loss_gradient(self, dloss_dvalue: np.ndarray) -> np.ndarray:
        return np.einsum("sb,sbp->p", dloss_dvalue, self.jacobian)


def render_with_grad(params: SceneParams, model: ParametricModel, rig: Rig,
                     rays: RigRays | None = None) -> GradientRecord:
    """Render every sensor of ``rig`` and differentiate w.r.t. ``params``.

    Hit triangles are frozen at the current parameters; hit distance and
    normal are differentiated through the transformed triangle's plane.
    """
    rays = prepare_rays(rig) if rays is None else rays
    scene = model.scene(params)
    parts, jac_geo = render_parts(rays, scene, model.vertex_jacobian(params))
    raw = scene.albedo_object * parts[:, 0] + scene.albedo_plane * parts[:, 1]
    raw_jac = np.concatenate([scene.albedo_object * jac_geo, parts], axis=1)
    values, jacs = [], []
    for h, j, spec in zip(split_sensors(rays, raw), split_sensors(rays, raw_jac), rig.specs):
        kernel = spec.effective_kernel()
        values.append(convolve_jitter(h, spec, kernel))
        jacs.append(convolve_jitter(j, spec, kernel))
    return GradientRecord(np.stack(values), np.stack(jacs), tuple(params.names))


def frozen_visibility_renderer(params: SceneParams, model: ParametricModel, rig: Rig,
                               rays: RigRays | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Histograms as a function of the parameter vector with visibility frozen at ``params``.

    Each ray keeps the triangle (or plane) it hits at ``params``; hit
    distance and normal are recomputed from the perturbed vertices. This is
    the function :func:`render_with_grad` differentiates, so finite
    differences of it are a like-for-like oracle.
    """
    rays = prepare_rays(rig) if rays is None else rays
    scene0 = model.scene(params)
    hits = trace_rays(scene0.placed_object, scene0.plane, rays.origins, rays.directions)
    kind = type(params)

    def fn(vec):
        scene = model.scene(kind.from_vector(vec))
        parts, _ = render_parts(rays, scene, hits=hits)
        raw = scene.albedo_object * parts[:, 0] + scene.albedo_plane * parts[:, 1]
        return np.stack([convolve_jitter(h, spec) for h, spec in zip(split_sensors(rays, raw), rig.specs)])

    return fn


def _central(fn, p, i, h):
    e = np.zeros_like(p)
    e.flat[i] = h
    return (np.asarray(fn(p + e)) - np.asarray(fn(p - e))) / (2 * h)


def _fd_columns(fn, params, step, richardson):
    p = np.asarray(params, dtype=float)
    steps = np.broadcast_to(np.asarray(step, dtype=float), p.shape)
    if np.any(steps <= 0):
        raise ValueError("finite-difference step must be positive")
    cols = []
    for i in range(p.size):
        d = _central(fn, p, i, steps.flat[i])
        if richardson:
            # cancels the h^2 truncation term: (4 D(h/2) - D(h)) / 3
            d = (4.0 * _central(fn, p, i, 0.5 * steps.flat[i]) - d) / 3.0
        cols.append(d)
    return cols


def finite_diff_gradient(loss: Callable[[np.ndarray], float], params, step,
                         richardson: bool = False) -> np.ndarray:
    """Central differences ``(f(p + d e_i) - f(p - d e_i)) / 2d`` per coordinate.

    ``step`` is a scalar or one step per coordinate. ``richardson`` combines
    steps ``d`` and ``d/2`` so the error is fourth order in ``d``.
    """
    p = np.asarray(params, dtype=float)
    return np.array(_fd_columns(loss, p, step, richardson), dtype=float).reshape(p.shape)


def finite_diff_jacobian(fn: Callable[[np.ndarray], np.ndarray], params, step,
                         richardson: bool = False) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued ``fn``; last axis indexes params."""
    return np.stack(_fd_columns(fn, params, step, richardson), axis=-1)


def default_fd_steps(params: SceneParams) -> np.ndarray:
    """1e-6 for geometric coordinates, 1e-3 for albedos.

    The geometric step must stay well below the soft bin's depth scale
    (``bin depth / (k dt)``, 0.7 mm by default), amplified at grazing hits;
    at 1e-4 the central-difference truncation error alone reaches 1e-2.
    """
    n = len(params.names)
    steps = np.full(n, 1e-6)
    steps[-2:] = 1e-3
    return steps


@dataclass(frozen=True)
class GradCheckReport:
    """Per-parameter agreement between the analytic and finite-difference Jacobians."""

    names: tuple[str, ...]
    column_rel_error: np.ndarray  # ||J_fd - J|| / ||J_fd|| per parameter
    column_abs_error: np.ndarray  # max |J_fd - J| per parameter
    entry_fail_fraction: float  # entries outside rel 1e-3 / abs 1e-8, for information
    rtol: float = 1e-3
    atol: float = 1e-8

    @property
    def passed(self) -> bool:
        return bool(np.all((self.column_rel_error < self.rtol) | (self.column_abs_error < self.atol)))

    @property
    def max_rel_error(self) -> float:
        ok_abs = self.column_abs_error < self.atol
        rel = np.where(ok_abs, 0.0, self.column_rel_error)
        return float(rel.max()) if rel.size else 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "entry_fail_fraction": self.entry_fail_fraction,
            "parameters": {
                n: {"rel_error": float(r), "abs_error": float(a)}
                for n, r, a in zip(self.names, self.column_rel_error, self.column_abs_error)
            },
        }


def gradient_check(params: SceneParams, model: ParametricModel, rig: Rig, rays: RigRays | None = None,
                   steps=None, richardson: bool = False, rtol: float = 1e-3, atol: float = 1e-8) -> GradCheckReport:
    """Compare :func:`render_with_grad` with central differences of the frozen-visibility renderer."""
    rays = prepare_rays(rig) if rays is None else rays
    rec = render_with_grad(params, model, rig, rays)
    fn = frozen_visibility_renderer(params, model, rig, rays)
    steps = default_fd_steps(params) if steps is None else steps
    fd = finite_diff_jacobian(fn, params.to_vector(), steps, richardson=richardson)
    p = fd.shape[-1]
    fd2 = fd.reshape(-1, p)
    diff = (fd - rec.jacobian).reshape(-1, p)
    norm = np.linalg.norm(fd2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(norm > 0, np.linalg.norm(diff, axis=0) / norm, np.where(np.abs(diff).max(0) > 0, np.inf, 0.0))
    err = np.abs(diff)
    entry_ok = (err <= rtol * np.abs(fd2)) | (err < atol)
    return GradCheckReport(tuple(params.names), rel, err.max(axis=0), float(1.0 - entry_ok.mean()), rtol, atol)
