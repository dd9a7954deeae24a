"""Analysis-by-synthesis refinement of scene parameters with Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DivergenceError, InvalidParameterError
from ..geometry import matrix_to_rot6d, rot6d_to_matrix
from ..grad import ParametricModel, PosedMeshParams, SceneParams, render_with_grad
from ..render import Rig, RigRays, prepare_rays
from .adam import Adam
from .loss import LOSS_NORMS, check_observed, histogram_loss

MIN_ALBEDO = 1e-6


@dataclass(frozen=True)
class RefineConfig:
    lr_rot: float = 0.01
    lr_trans: float = 0.001
    lr_albedo: float = 0.01
    lr_diameter: float = 0.001
    steps: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_norm: str = "L2"
    normalize: bool = False
    optimize_albedo: bool = True

    def __post_init__(self):
        for name in ("lr_rot", "lr_trans", "lr_albedo", "lr_diameter"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.steps < 1:
            raise InvalidParameterError("steps must be >= 1")
        if self.loss_norm not in LOSS_NORMS:
            raise InvalidParameterError(f"loss_norm must be one of {LOSS_NORMS}")

    def learning_rates(self, names) -> np.ndarray:
        lr = []
        for n in names:
            if n.startswith("albedo"):
                lr.append(self.lr_albedo)
            elif n.startswith("r"):
                lr.append(self.lr_rot)
            elif n == "diameter":
                lr.append(self.lr_diameter)
            else:
                lr.append(self.lr_trans)
        return np.array(lr)


@dataclass(frozen=True, eq=False)
class RefineResult:
    params: SceneParams
    loss: float  # recorded loss of ``params``
    trace: np.ndarray  # loss at every evaluated iterate, starting with the initialization
    best_step: int

    @property
    def initial_loss(self) -> float:
        return float(self.trace[0])


def canonical(params: SceneParams) -> SceneParams:
    """Same rotation with an exactly orthonormal rot6 (the first two matrix columns)."""
    if isinstance(params, PosedMeshParams):
        rot6 = matrix_to_rot6d(rot6d_to_matrix(params.rot6))
        return PosedMeshParams(rot6, params.translation, params.albedo_object, params.albedo_plane)
    return params


class _Coordinates:
    """Maps scene parameters to optimizer coordinates (log albedos) and back."""

    def __init__(self, kind, n_geometric: int):
        self.kind = kind
        self.n = n_geometric

    def encode(self, params: SceneParams) -> np.ndarray:
        v = params.to_vector().copy()
        v[self.n:] = np.log(np.maximum(v[self.n:], MIN_ALBEDO))
        return v

    def decode(self, z: np.ndarray) -> SceneParams:
        v = z.copy()
        v[self.n:] = np.exp(v[self.n:])
        return self.kind.from_vector(v)

    def chain(self, grad_params: np.ndarray, params: SceneParams) -> np.ndarray:
        g = grad_params.copy()
        g[self.n:] *= params.to_vector()[self.n:]
        return g


def evaluate_loss(params: SceneParams, observed, model: ParametricModel, rig: Rig, rays: RigRays | None = None,
                  loss_norm: str = "L2", normalize: bool = False) -> float:
    from ..render import render_rig

    rendered = render_rig(model.scene(params), rig, rays)
    return histogram_loss(rendered, observed, loss_norm, normalize)[0]


def refine(init: SceneParams, observed, model: ParametricModel, rig: Rig, cfg: RefineConfig | None = None,
           rays: RigRays | None = None) -> RefineResult:
    """Run ``cfg.steps`` Adam iterations on the histogram loss from ``init``.

    Returns the iterate with the lowest recorded loss (the initialization
    included), so the result is never worse than ``init``.
    """
    cfg = RefineConfig() if cfg is None else cfg
    observed = check_observed(observed, rig)
    rays = prepare_rays(rig) if rays is None else rays
    params = canonical(init)  # raw optimizer coordinates from here on
    coords = _Coordinates(type(params), model.n_geometric)
    lr = cfg.learning_rates(params.names)
    mask = np.ones(len(lr))
    if not cfg.optimize_albedo:
        mask[model.n_geometric:] = 0.0
    opt = Adam(lr, cfg.beta1, cfg.beta2, cfg.eps)
    z = coords.encode(params)
    trace = []
    best = (np.inf, params, 0)
    for step in range(cfg.steps + 1):
        rec = render_with_grad(params, model, rig, rays)
        loss, dloss = histogram_loss(rec.value, observed, cfg.loss_norm, cfg.normalize)
        trace.append(loss)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at refinement step {step}", trace=np.array(trace))
        if loss < best[0]:
            best = (loss, canonical(params), step)
        if step == cfg.steps:
            break
        grad = coords.chain(rec.loss_gradient(dloss), params) * mask
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient at refinement step {step}", trace=np.array(trace))
        z = opt.step(z, grad)
        try:
            params = coords.decode(z)
        except InvalidParameterError as e:
            raise DivergenceError(f"invalid parameters at refinement step {step + 1}: {e}",
                                  trace=np.array(trace)) from e
    loss, params, step = best
    return RefineResult(params, float(loss), np.array(trace), step)
