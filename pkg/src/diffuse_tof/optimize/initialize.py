"""Multi-start initialization: sample many scene hypotheses, rank by loss, refine the best few."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from ..datagen import Workspace, drop_to_plane, sample_disk
from ..exceptions import InvalidParameterError
from ..geometry import Pose6D, random_rotation
from ..grad import ParametricModel, PosedMeshModel, PosedMeshParams, SceneParams, SphereParams
from ..parallel import parallel_map
from ..render import Rig, RigRays, convolve_jitter, prepare_rays, render_parts, split_sensors
from .loss import check_observed, histogram_loss
from .refine import RefineConfig, RefineResult, refine


@dataclass(frozen=True)
class InitConfig:
    """Multi-start budget.

    ``n_candidates`` hypotheses cover the whole workspace. For posed meshes,
    ``n_rounds`` further rounds each draw ``n_orientations`` fresh rotations
    placed around an anchor: the mean planar position of the ``anchor_top``
    best candidates so far, jittered by ``anchor_sigma`` (halved every
    round). Histograms pin down position far better than orientation, and
    orientation ranking only works near the right position. All candidates are ranked on
    a ``rank_grid`` x ``rank_grid`` ray grid (the rig's own grid when
    ``None``); the best ``n_rescore`` are re-scored at full resolution before
    the top ``n_survivors`` are briefly refined.
    """

    n_candidates: int = 512
    n_orientations: int = 512
    n_rounds: int = 2
    anchor_top: int = 16
    anchor_sigma: float = 0.015
    n_survivors: int = 8
    short_refine_steps: int = 25
    workspace: Workspace = field(default_factory=Workspace)
    diameter_range: tuple[float, float] = (0.04, 0.30)
    rank_grid: int | None = 32
    n_rescore: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.n_candidates < 1:
            raise InvalidParameterError("n_candidates must be >= 1")
        if not 1 <= self.n_survivors <= self.n_candidates:
            raise InvalidParameterError("n_survivors must lie in [1, n_candidates]")
        if self.n_orientations < 0 or self.n_rounds < 0 or self.anchor_top < 1 or self.anchor_sigma < 0:
            raise InvalidParameterError("n_orientations, n_rounds, anchor_sigma must be >= 0 and anchor_top >= 1")
        if self.short_refine_steps < 0:
            raise InvalidParameterError("short_refine_steps must be >= 0")
        lo, hi = self.diameter_range
        if not 0 < lo <= hi:
            raise InvalidParameterError("diameter_range must satisfy 0 < lo <= hi")


@dataclass(frozen=True, eq=False)
class InitResult:
    params: SceneParams
    loss: float
    candidates: list  # every sampled hypothesis, albedos fitted
    candidate_losses: np.ndarray  # ranking loss (possibly on the coarse grid)
    survivors: list  # RefineResult of each short-refined survivor


def sample_candidates(model: ParametricModel, cfg: InitConfig, rng: np.random.Generator) -> list[SceneParams]:
    """Scene hypotheses resting on the plane, with unit albedos."""
    ws = cfg.workspace
    out: list[SceneParams] = []
    if isinstance(model, PosedMeshModel):
        rots = random_rotation(rng, cfg.n_candidates)
        for rot in rots:
            xy = sample_disk(rng, ws)
            out.append(PosedMeshParams.from_pose(Pose6D.from_matrix(rot, drop_to_plane(model.template, rot, xy, ws.height))))
    else:
        lo, hi = cfg.diameter_range
        for _ in range(cfg.n_candidates):
            d = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            xy = sample_disk(rng, ws)
            out.append(SphereParams((xy[0], xy[1], ws.height + d / 2), d))
    return out


def orientation_candidates(model: PosedMeshModel, anchor_xy, n: int, sigma: float, ws: Workspace,
                           rng: np.random.Generator) -> list[PosedMeshParams]:
    """``n`` uniform rotations near ``anchor_xy`` (isotropic ``sigma`` jitter), dropped onto the plane."""
    out = []
    for rot in random_rotation(rng, n):
        xy = np.asarray(anchor_xy, dtype=float) + rng.normal(0.0, sigma, 2)
        out.append(PosedMeshParams.from_pose(Pose6D.from_matrix(rot, drop_to_plane(model.template, rot, xy, ws.height))))
    return out


def unit_part_histograms(params: SceneParams, model: ParametricModel, rig: Rig, rays: RigRays) -> np.ndarray:
    """Jittered unit-albedo histograms ``(S, B, 2)`` of the object and the plane."""
    parts, _ = render_parts(rays, model.scene(params))
    return np.stack([convolve_jitter(h, spec) for h, spec in zip(split_sensors(rays, parts), rig.specs)])


def fit_albedos(parts: np.ndarray, observed: np.ndarray) -> tuple[float, float]:
    """Non-negative least-squares albedos; parts that are never seen keep albedo 1."""
    a = parts.reshape(-1, 2)
    seen = np.abs(a).sum(axis=0) > 0
    albedo = np.ones(2)
    if seen.any():
        albedo[seen], _ = nnls(a[:, seen], observed.ravel())
    return float(albedo[0]), float(albedo[1])


def score_candidates(candidates, observed, model, rig: Rig, rays: RigRays | None = None,
                     loss_norm: str = "L2") -> tuple[list[SceneParams], np.ndarray]:
    """Fit albedos to each candidate and return them with their losses."""
    rays = prepare_rays(rig) if rays is None else rays
    fitted, losses = [], []
    for cand in candidates:
        parts = unit_part_histograms(cand, model, rig, rays)
        ro, rp = fit_albedos(parts, observed)
        fitted.append(cand.with_albedos(ro, rp))
        losses.append(histogram_loss(ro * parts[..., 0] + rp * parts[..., 1], observed, loss_norm)[0])
    return fitted, np.array(losses)


def _score_chunk(args):
    return score_candidates(*args)


def _score_parallel(candidates, observed, model, rig, loss_norm, jobs):
    n_chunks = max(1, min(len(candidates), jobs if jobs and jobs > 1 else 1))
    chunks = [candidates[i::n_chunks] for i in range(n_chunks)]
    scored = parallel_map(_score_chunk, [(c, observed, model, rig, None, loss_norm) for c in chunks], jobs)
    fitted: list = [None] * len(candidates)
    losses = np.empty(len(candidates))
    for i, (cands, ls) in enumerate(scored):
        fitted[i::n_chunks] = cands
        losses[i::n_chunks] = ls
    return fitted, losses


def _refine_task(args):
    return refine(*args)


def _coarse_rig(rig: Rig, grid: int | None) -> Rig:
    if grid is None:
        return rig
    specs = [s.replace(grid_h=min(grid, s.grid_h), grid_w=min(grid, s.grid_w)) for s in rig.specs]
    return rig.with_specs(specs)


def initialize(observed, model: ParametricModel, rig: Rig, cfg: InitConfig | None = None,
               refine_cfg: RefineConfig | None = None, jobs: int | None = 1) -> InitResult:
    """Rank random scene hypotheses by histogram loss and return the best after a short refinement.

    Deterministic given ``cfg.seed`` and the inputs, for any ``jobs``.
    """
    cfg = InitConfig() if cfg is None else cfg
    refine_cfg = RefineConfig() if refine_cfg is None else refine_cfg
    observed = check_observed(observed, rig)
    rng = np.random.default_rng(cfg.seed)
    candidates = sample_candidates(model, cfg, rng)

    rank_rig = _coarse_rig(rig, cfg.rank_grid)
    fitted, losses = _score_parallel(candidates, observed, model, rank_rig, refine_cfg.loss_norm, jobs)
    if isinstance(model, PosedMeshModel) and cfg.n_orientations > 0:
        for r in range(cfg.n_rounds):
            top = np.argsort(losses, kind="stable")[:cfg.anchor_top]
            anchor = np.mean([candidates[i].translation[:2] for i in top], axis=0)
            extra = orientation_candidates(model, anchor, cfg.n_orientations, cfg.anchor_sigma / 2**r,
                                           cfg.workspace, rng)
            f2, l2 = _score_parallel(extra, observed, model, rank_rig, refine_cfg.loss_norm, jobs)
            candidates, fitted, losses = candidates + extra, fitted + f2, np.concatenate([losses, l2])
    order = np.argsort(losses, kind="stable")

    rays = prepare_rays(rig)
    n_rescore = max(cfg.n_survivors, min(cfg.n_rescore, len(candidates)))
    top = [candidates[i] for i in order[:n_rescore]]
    if rank_rig is not rig:
        top, top_losses = score_candidates(top, observed, model, rig, rays, refine_cfg.loss_norm)
    else:
        top_losses = losses[order[:n_rescore]]
    survivors = [top[i] for i in np.argsort(top_losses, kind="stable")[:cfg.n_survivors]]

    short = dataclasses.replace(refine_cfg, steps=max(cfg.short_refine_steps, 1))
    if cfg.short_refine_steps == 0:
        results = [RefineResult(p, float(l), np.array([l]), 0)
                   for p, l in zip(survivors, np.sort(top_losses, kind="stable")[:cfg.n_survivors])]
    else:
        results = parallel_map(_refine_task, [(p, observed, model, rig, short) for p in survivors], jobs)
    best = min(range(len(results)), key=lambda i: (results[i].loss, i))
    return InitResult(results[best].params, results[best].loss, fitted, losses, results)
