"""Synthetic scenes, rigs and datasets with ground truth."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import __version__
from .exceptions import InvalidParameterError
from .formats import dumps, save_histograms, save_params, save_rig, write_json
from .geometry import Plane, Pose6D, TriangleMesh, random_rotation
from .grad import PosedMeshModel, PosedMeshParams, SceneParams, SphereModel, SphereParams
from .parallel import parallel_map
from .render import Rig, SensorPose, SensorSpec, look_at, render_rig


@dataclass(frozen=True)
class Workspace:
    """Disk on the supporting plane ``z = height`` where objects are placed."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.15
    height: float = 0.0

    @property
    def center3(self) -> np.ndarray:
        return np.array([self.center[0], self.center[1], self.height])

    @property
    def plane(self) -> Plane:
        return Plane((0.0, 0.0, self.height), (0.0, 0.0, 1.0))


def sample_disk(rng: np.random.Generator, workspace: Workspace) -> np.ndarray:
    r = workspace.radius * np.sqrt(rng.uniform())
    a = rng.uniform(0, 2 * np.pi)
    return np.array(workspace.center) + r * np.array([np.cos(a), np.sin(a)])


def drop_to_plane(template: TriangleMesh, rotation, xy, height: float = 0.0) -> np.ndarray:
    """Translation that puts the lowest rotated vertex exactly on the plane."""
    z = (template.vertices @ np.asarray(rotation).T)[:, 2]
    return np.array([xy[0], xy[1], height - z.min()])


def sample_object_pose(template: TriangleMesh, workspace: Workspace, rng: np.random.Generator) -> Pose6D:
    """Uniform rotation, uniform position in the workspace disk, resting on the plane."""
    rot = random_rotation(rng)
    xy = sample_disk(rng, workspace)
    return Pose6D.from_matrix(rot, drop_to_plane(template, rot, xy, workspace.height))


def sample_sphere(workspace: Workspace, rng: np.random.Generator,
                  diameter_range=(0.06, 0.24)) -> tuple[np.ndarray, float]:
    d = rng.uniform(*diameter_range)
    xy = sample_disk(rng, workspace)
    return np.array([xy[0], xy[1], workspace.height + d / 2]), float(d)


def sample_rig(rng: np.random.Generator, n_sensors: int = 15, spec: SensorSpec | None = None,
               center=(0.0, 0.0, 0.0), radius_range=(0.30, 0.80), jitter_deg: float = 15.0,
               min_elevation_deg: float = 10.0) -> Rig:
    """Sensors in a spherical shell above the plane, aimed at ``center`` with angular jitter.

    Positions are uniform in the shell volume restricted to elevations
    above ``min_elevation_deg``; the optical axis deviates from the
    direction to ``center`` by an angle uniform over the ``jitter_deg`` cone,
    and the roll about the axis is uniform.
    """
    center = np.asarray(center, dtype=float)
    r0, r1 = radius_range
    if not 0 < r0 <= r1:
        raise InvalidParameterError("radius_range must satisfy 0 < r0 <= r1")
    poses = []
    zmin = np.sin(np.deg2rad(min_elevation_deg))
    cos_max = np.cos(np.deg2rad(jitter_deg))
    for _ in range(n_sensors):
        r = rng.uniform(r0**3, r1**3) ** (1 / 3)
        z = rng.uniform(zmin, 1.0)
        phi = rng.uniform(0, 2 * np.pi)
        rho = np.sqrt(1 - z * z)
        pos = center + r * np.array([rho * np.cos(phi), rho * np.sin(phi), z])
        roll = rng.uniform(0, 2 * np.pi)
        theta = np.arccos(rng.uniform(cos_max, 1.0))
        psi = rng.uniform(0, 2 * np.pi)
        tilt = Rotation.from_rotvec(theta * np.array([-np.sin(psi), np.cos(psi), 0.0])).as_matrix()
        poses.append(SensorPose(pos, look_at(pos, center, roll=roll) @ tilt))
    return Rig(poses, spec if spec is not None else SensorSpec())


def perturb_rig(rig: Rig, sigma: float, rng: np.random.Generator) -> Rig:
    """Isotropic Gaussian noise on sensor positions; orientations unchanged."""
    poses = [SensorPose(p.position + rng.normal(0.0, sigma, 3), p.orientation) for p in rig.poses]
    return Rig(poses, rig.specs)


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "posed_mesh"
    n_sensors: int = 15
    spec: SensorSpec = field(default_factory=SensorSpec)
    workspace: Workspace = field(default_factory=Workspace)
    position_noise: float = 0.015
    albedo_range: tuple[float, float] = (0.3, 1.0)
    diameter_range: tuple[float, float] = (0.06, 0.24)
    poisson: bool = False

    def __post_init__(self):
        if self.kind not in ("posed_mesh", "sphere"):
            raise InvalidParameterError("kind must be 'posed_mesh' or 'sphere'")
        lo, hi = self.albedo_range
        if not 0 <= lo <= hi:
            raise InvalidParameterError("albedo_range must satisfy 0 <= lo <= hi")
        if self.position_noise < 0:
            raise InvalidParameterError("position_noise must be >= 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["spec"] = self.spec.to_dict()
        return d


@dataclass(frozen=True, eq=False)
class DatasetSample:
    index: int
    params: SceneParams
    rig: Rig  # nominal, used as the label
    rig_perturbed: Rig  # what the histograms were rendered from
    histograms: np.ndarray  # (S, B)
    seed: int


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def model_for(kind: str, template: TriangleMesh | None, plane: Plane):
    if kind == "sphere":
        return SphereModel(plane)
    return PosedMeshModel(template, plane)


def generate_sample(template: TriangleMesh | None, cfg: DatasetConfig, seed: int, index: int) -> DatasetSample:
    rng = sample_rng(seed, index)
    ws = cfg.workspace
    if cfg.kind == "sphere":
        center, diameter = sample_sphere(ws, rng, cfg.diameter_range)
        albedos = rng.uniform(*cfg.albedo_range, size=2)
        params: SceneParams = SphereParams(center, diameter, *albedos)
    else:
        pose = sample_object_pose(template, ws, rng)
        albedos = rng.uniform(*cfg.albedo_range, size=2)
        params = PosedMeshParams.from_pose(pose, *albedos)
    rig = sample_rig(rng, cfg.n_sensors, cfg.spec, ws.center3)
    noisy = perturb_rig(rig, cfg.position_noise, rng)
    scene = model_for(cfg.kind, template, ws.plane).scene(params)
    hist = render_rig(scene, noisy, poisson=cfg.poisson, rng=rng)
    return DatasetSample(index, params, rig, noisy, hist, int(seed))


def write_sample(sample: DatasetSample, directory) -> Path:
    d = Path(directory) / f"sample_{sample.index:06d}"
    d.mkdir(parents=True, exist_ok=True)
    save_params(d / "params.json", sample.params, index=sample.index, seed=sample.seed)
    perturbed = [p.position.tolist() for p in sample.rig_perturbed.poses]
    save_rig(d / "rig.json", sample.rig, perturbed_positions=perturbed)
    save_histograms(d / "hist.csv", sample.histograms, sample.rig.specs)
    return d


def _generate_and_write(args):
    template, cfg, seed, index, out = args
    sample = generate_sample(template, cfg, seed, index)
    if out is not None:
        write_sample(sample, out)
    return sample


def generate_dataset(template: TriangleMesh | None, n_samples: int, cfg: DatasetConfig | None = None,
                     seed: int = 0, out_dir=None, jobs: int | None = 1) -> list[DatasetSample]:
    """Generate ``n_samples`` samples; each has its own RNG stream from ``(seed, index)``.

    With ``out_dir`` the samples and a ``manifest.json`` are written there.
    Output does not depend on ``jobs``.
    """
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be >= 1")
    cfg = DatasetConfig() if cfg is None else cfg
    if cfg.kind == "posed_mesh" and template is None:
        raise InvalidParameterError("posed_mesh datasets need a template mesh")
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    tasks = [(template, cfg, seed, i, out) for i in range(n_samples)]
    samples = parallel_map(_generate_and_write, tasks, jobs)
    if out is not None:
        manifest = {
            "tool": "diffuse_tof",
            "version": __version__,
            "seed": int(seed),
            "n_samples": n_samples,
            "config": cfg.to_dict(),
            "config_hash": hashlib.sha256(dumps(cfg.to_dict()).encode()).hexdigest(),
            "template_hash": None if template is None else template.digest(),
        }
        write_json(out / "manifest.json", manifest)
    return samples


def dataset_digest(directory) -> str:
    """SHA-256 over every file (relative path and bytes) under ``directory``."""
    h = hashlib.sha256()
    root = Path(directory)
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()
