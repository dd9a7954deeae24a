"""Scripted experiments: view-count sweep and sensor-model ablations."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .datagen import Workspace, perturb_rig, sample_object_pose, sample_rig, sample_rng
from .eval import compute_add, compute_add_s, run_baseline
from .eval.metrics import auc
from .exceptions import DivergenceError, InvalidParameterError
from .geometry import TriangleMesh
from .grad import PosedMeshModel, PosedMeshParams
from .optimize import InitConfig, RefineConfig, estimate_scene
from .parallel import parallel_map
from .render import Rig, SensorSpec, render_rig

VIEW_BUDGETS = (5, 10, 15, 25, 50, 100)
ABLATION_VARIANTS = ("full", "delta-kernel", "wrong-bin-size", "wrong-fov")
WRONG_BIN_RATIO = 1.2 / 1.38
WRONG_FOV_DEG = 38.0


def ablated_spec(spec: SensorSpec, variant: str) -> SensorSpec:
    """The sensor model a variant assumes in place of ``spec``.

    ``delta-kernel`` puts all jitter mass at the kernel's peak tap,
    ``wrong-bin-size`` shrinks the bin width from 1.38 to 1.2 cm of depth and
    ``wrong-fov`` widens the field of view to 38 degrees with a flat intensity map.
    """
    if variant == "full":
        return spec
    if variant == "delta-kernel":
        k = np.asarray(spec.effective_kernel())
        delta = np.zeros_like(k)
        delta[int(np.argmax(k))] = 1.0
        return spec.replace(jitter_kernel=tuple(delta), jitter_scale=1.0)
    if variant == "wrong-bin-size":
        return spec.replace(bin_width_s=spec.bin_width_s * WRONG_BIN_RATIO)
    if variant == "wrong-fov":
        return spec.replace(fov_deg=WRONG_FOV_DEG, intensity_model="constant")
    raise InvalidParameterError(f"unknown ablation variant {variant!r}; choose from {ABLATION_VARIANTS}")


@dataclass(frozen=True)
class PoseScene:
    """One synthetic pose problem: ground truth, nominal rig and observed histograms."""

    index: int
    gt: PosedMeshParams
    rig: Rig  # nominal sensor poses, what the solver is given
    observed: np.ndarray  # rendered from the perturbed rig


def pose_scene(template: TriangleMesh, seed: int, index: int, n_sensors: int, spec: SensorSpec | None = None,
               workspace: Workspace | None = None, position_noise: float = 0.0, poisson: bool = False) -> PoseScene:
    ws = Workspace() if workspace is None else workspace
    rng = sample_rng(seed, index)
    pose = sample_object_pose(template, ws, rng)
    gt = PosedMeshParams.from_pose(pose, *rng.uniform(0.3, 1.0, 2))
    rig = sample_rig(rng, n_sensors, spec, ws.center3)
    noisy = perturb_rig(rig, position_noise, rng) if position_noise > 0 else rig
    observed = render_rig(PosedMeshModel(template, ws.plane).scene(gt), noisy, poisson=poisson, rng=rng)
    return PoseScene(index, gt, rig, observed)


def _solve(scene: PoseScene, template, rig, observed, ws, init_cfg, refine_cfg):
    """ADD and ADD-S of the pipeline's estimate; a diverged run counts as inf."""
    model = PosedMeshModel(template, ws.plane)
    pts = template.model_points()
    try:
        est = estimate_scene(observed, model, rig, init_cfg, refine_cfg)
    except DivergenceError:
        return float("inf"), float("inf"), float("inf")
    p = est.params
    return compute_add(p, scene.gt, pts), compute_add_s(p, scene.gt, pts), est.refined.loss


# -- view-count sweep ------------------------------------------------------------

@dataclass(frozen=True)
class ViewSweepConfig:
    budgets: tuple[int, ...] = VIEW_BUDGETS
    n_scenes: int = 10
    spec: SensorSpec = field(default_factory=SensorSpec)
    workspace: Workspace = field(default_factory=Workspace)
    position_noise: float = 0.0
    poisson: bool = True
    init: InitConfig = field(default_factory=InitConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    baseline: bool = True

    def __post_init__(self):
        if not self.budgets or min(self.budgets) < 1:
            raise InvalidParameterError("budgets must be positive sensor counts")
        if self.n_scenes < 1:
            raise InvalidParameterError("n_scenes must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["spec"] = self.spec.to_dict()
        return d


def _sweep_task(args):
    template, cfg, seed, index, n = args
    scene = pose_scene(template, seed, index, max(cfg.budgets), cfg.spec, cfg.workspace, cfg.position_noise,
                       cfg.poisson)
    rig = scene.rig.subset(n)
    init_cfg = dataclasses.replace(cfg.init, seed=int(cfg.init.seed) + index)
    add, add_s, loss = _solve(scene, template, rig, scene.observed[:n], cfg.workspace, init_cfg, cfg.refine)
    row = {"scene": index, "n_views": n, "add": add, "add_s": add_s, "loss": loss}
    if cfg.baseline:
        model = PosedMeshModel(template, cfg.workspace.plane)
        base = run_baseline(scene.gt, template, model.scene(scene.gt), rig, "single_pixel")
        row["baseline_add"] = base.add
    return row


def run_viewsweep(template: TriangleMesh, cfg: ViewSweepConfig | None = None, seed: int = 0,
                  jobs: int | None = 1) -> tuple[list[dict], list[dict]]:
    """Pose accuracy against the number of single-pixel views.

    Every scene draws one rig with ``max(budgets)`` sensors; smaller budgets
    use its first ``n`` sensors, so the rigs are nested. Returns per-run rows
    and one summary row per budget.
    """
    cfg = ViewSweepConfig() if cfg is None else cfg
    tasks = [(template, cfg, seed, i, n) for i in range(cfg.n_scenes) for n in cfg.budgets]
    rows = parallel_map(_sweep_task, tasks, jobs)
    summary = []
    for n in cfg.budgets:
        sel = [r for r in rows if r["n_views"] == n]
        adds = np.array([r["add"] for r in sel])
        s = {"n_views": n, "median_add": float(np.median(adds)), "auc_add": auc(adds),
             "auc_add_s": auc([r["add_s"] for r in sel])}
        if cfg.baseline:
            s["median_baseline_add"] = float(np.median([r["baseline_add"] for r in sel]))
        summary.append(s)
    return rows, summary


# -- sensor-model ablation ------------------------------------------------------------

@dataclass(frozen=True)
class AblationConfig:
    variants: tuple[str, ...] = ABLATION_VARIANTS
    n_scenes: int = 10
    n_sensors: int = 15
    spec: SensorSpec = field(default_factory=SensorSpec)
    workspace: Workspace = field(default_factory=Workspace)
    position_noise: float = 0.0
    init: InitConfig = field(default_factory=InitConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)

    def __post_init__(self):
        bad = set(self.variants) - set(ABLATION_VARIANTS)
        if bad:
            raise InvalidParameterError(f"unknown ablation variant(s) {sorted(bad)}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["spec"] = self.spec.to_dict()
        return d


def ablation_histograms(scene, rig: Rig, variant: str) -> tuple[np.ndarray, np.ndarray]:
    """Histograms of ``scene`` under the full sensor model and under ``variant``."""
    full = render_rig(scene, rig)
    alt = render_rig(scene, rig.with_specs([ablated_spec(s, variant) for s in rig.specs]))
    return full, alt


def _ablation_task(args):
    template, cfg, seed, index, variant = args
    scene = pose_scene(template, seed, index, cfg.n_sensors, cfg.spec, cfg.workspace, cfg.position_noise)
    rig = scene.rig.with_specs([ablated_spec(s, variant) for s in scene.rig.specs])
    init_cfg = dataclasses.replace(cfg.init, seed=int(cfg.init.seed) + index)
    add, add_s, loss = _solve(scene, template, rig, scene.observed, cfg.workspace, init_cfg, cfg.refine)
    return {"scene": index, "variant": variant, "add": add, "add_s": add_s, "loss": loss}


def run_ablation(template: TriangleMesh, cfg: AblationConfig | None = None, seed: int = 0,
                 jobs: int | None = 1) -> tuple[list[dict], list[dict]]:
    """Recover poses from full-model observations while assuming each variant's sensor model."""
    cfg = AblationConfig() if cfg is None else cfg
    tasks = [(template, cfg, seed, i, v) for v in cfg.variants for i in range(cfg.n_scenes)]
    rows = parallel_map(_ablation_task, tasks, jobs)
    summary = []
    for v in cfg.variants:
        adds = [r["add"] for r in rows if r["variant"] == v]
        summary.append({"variant": v, "median_add": float(np.median(adds)), "auc_add": auc(adds)})
    return rows, summary
