"""Sensor calibration: jitter-kernel scale, bin width and temporal offset from known planar scenes."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..exceptions import ConfigurationError, DivergenceError, InvalidParameterError
from ..geometry import Part, Plane, trace_rays
from ..render import (Rig, SceneModel, SensorPose, SensorSpec, prepare_rays, ray_contributions, resample_kernel,
                      shift_convolve)
from ..render.forward import half_window
from .adam import Adam
from .loss import histogram_loss

LOW_CONFIDENCE_DISTANCES = 3


@dataclass(frozen=True)
class CalibConfig:
    steps: int = 300
    lr_log_scale: float = 0.01
    lr_log_bin_width: float = 0.001
    lr_offset: float = 0.01
    lr_log_gain: float = 0.01
    fit_gain: bool = True
    loss_norm: str = "L2"
    bin_width_search: float = 0.10  # relative half-range of the coarse grid
    offset_search: float = 16.0  # bins, half-range of the coarse grid
    scale_search: float = 0.4  # half-range of log(s_scale) on the coarse grid

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidParameterError("steps must be >= 0")
        if min(self.lr_log_scale, self.lr_log_bin_width, self.lr_offset, self.lr_log_gain) <= 0:
            raise InvalidParameterError("learning rates must be positive")


@dataclass(frozen=True, eq=False)
class CalibResult:
    s_scale: float
    bin_width_s: float
    temporal_offset_bins: float
    gain: float
    residual: float
    trace: np.ndarray
    n_distances: int
    low_confidence: bool

    def apply(self, spec: SensorSpec) -> SensorSpec:
        return spec.replace(jitter_scale=self.s_scale, bin_width_s=self.bin_width_s,
                            temporal_offset_bins=self.temporal_offset_bins)

    def to_dict(self) -> dict:
        return {
            "s_scale": self.s_scale,
            "bin_width_s": self.bin_width_s,
            "temporal_offset_bins": self.temporal_offset_bins,
            "gain": self.gain,
            "residual": self.residual,
            "n_distances": self.n_distances,
            "low_confidence": self.low_confidence,
        }


class _Captures:
    """Per-ray two-way times and unit-gain weights of every capture, fixed during calibration."""

    def __init__(self, poses, spec: SensorSpec, scenes):
        rig = Rig(poses, spec)
        rays = prepare_rays(rig)
        taus, weights, sensors = [], [], []
        for i, scene in enumerate(scenes):
            sub = rays._replace(origins=rays.origins[rays.sensor == i], directions=rays.directions[rays.sensor == i],
                                amplitude=rays.amplitude[rays.sensor == i], sensor=rays.sensor[rays.sensor == i])
            c = ray_contributions(sub, scene)
            albedo = np.where(c.part == Part.OBJECT, scene.albedo_object, scene.albedo_plane)
            taus.append(c.tau)
            weights.append(c.weight * albedo)
            sensors.append(c.sensor)
        self.tau = np.concatenate(taus)
        self.weight = np.concatenate(weights)
        self.sensor = np.concatenate(sensors)
        self.n = len(poses)
        self.n_bins = spec.n_bins
        self.fixed_k = spec.soft_bin_k
        self.sharpness = spec.k * spec.bin_width_s

    def binned(self, dt: float, want_grad: bool = False):
        """Raw histograms ``(n, B)`` for bin width ``dt`` and their derivative w.r.t. ``dt``."""
        nb = self.n_bins
        if self.fixed_k is None:
            k, dk = self.sharpness / dt, -self.sharpness / dt**2
        else:
            k, dk = self.fixed_k, 0.0
        hw = half_window(k, dt, nb)
        idx = np.floor(self.tau / dt).astype(np.int64)[:, None] + np.arange(-hw, hw + 1)
        valid = (idx >= 0) & (idx < nb)
        rel0 = self.tau[:, None] - idx * dt
        rel1 = rel0 - dt
        s0, s1 = expit(k * rel0), expit(k * rel1)
        flat = (self.sensor[:, None] * nb + idx)[valid]
        w = (self.weight[:, None] * (s0 - s1))[valid]
        out = np.bincount(flat, weights=w, minlength=self.n * nb).reshape(self.n, nb)
        if not want_grad:
            return out, None
        dx0 = dk * rel0 - k * idx
        dx1 = dk * rel1 - k * (idx + 1)
        dw = self.weight[:, None] * (s0 * (1 - s0) * dx0 - s1 * (1 - s1) * dx1)
        dout = np.bincount(flat, weights=dw[valid], minlength=self.n * nb).reshape(self.n, nb)
        return out, dout


def _apply_kernel(raw, kernel, offset, with_offset_grad=False):
    return shift_convolve(raw.T, kernel, offset, with_offset_grad)


def _offset_table(raw, kernel, offsets):
    """``shift_convolve`` of every row of ``raw`` for each offset, shape ``(n_off, S, B)``.

    Shifting commutes with convolution, so one full convolution per row is
    gathered at ``i + offset`` with linear interpolation.
    """
    n_s, nb = raw.shape
    full = np.stack([np.convolve(row, kernel) for row in raw])  # (S, B + L - 1)
    pad = np.zeros((n_s, full.shape[1] + 2))
    pad[:, 1:-1] = full
    m = np.floor(offsets).astype(np.int64)
    f = (offsets - m)[:, None, None]
    idx = np.arange(nb)[None, :] + m[:, None]  # (n_off, B)

    def gather(ix):
        ok = (ix >= 0) & (ix < full.shape[1])
        vals = pad[:, np.clip(ix, -1, full.shape[1]) + 1]  # (S, n_off, B)
        return np.where(ok[None], vals, 0.0).transpose(1, 0, 2)

    return (1 - f) * gather(idx) + f * gather(idx + 1)


def capture_distances(poses, scenes) -> np.ndarray:
    """Distance along each sensor's optical axis to the first surface (inf on a miss)."""
    out = []
    for pose, scene in zip(poses, scenes):
        hits = trace_rays(scene.placed_object, scene.plane, pose.position[None], pose.optical_axis[None])
        out.append(hits.distance[0] if hits.part[0] != Part.NONE else np.inf)
    return np.array(out)


def calibrate_sensor(observed, poses, spec_initial: SensorSpec, scenes=None,
                     cfg: CalibConfig | None = None) -> CalibResult:
    """Fit ``(s_scale, bin width, temporal offset)`` (and a global gain) to captures of known scenes.

    ``observed`` holds one histogram per capture, taken from ``poses[i]`` of
    ``scenes[i]`` (default: a unit-albedo plane ``z = 0`` for every capture).
    The reference kernel is ``spec_initial.jitter_kernel``; the other spec
    fields stay fixed. Fewer than three distinct capture distances leave bin
    width and offset poorly separated and the result is flagged.
    """
    cfg = CalibConfig() if cfg is None else cfg
    poses = list(poses)
    if not poses or not all(isinstance(p, SensorPose) for p in poses):
        raise ConfigurationError("calibration needs at least one SensorPose")
    observed = np.atleast_2d(np.asarray(observed, dtype=float))
    if observed.shape != (len(poses), spec_initial.n_bins):
        raise ConfigurationError(
            f"observed shape {observed.shape} does not match {len(poses)} captures x {spec_initial.n_bins} bins")
    if scenes is None:
        scenes = SceneModel(None, Plane())
    if isinstance(scenes, SceneModel):
        scenes = [scenes] * len(poses)
    if len(scenes) != len(poses):
        raise ConfigurationError(f"{len(scenes)} scenes for {len(poses)} captures")

    caps = _Captures(poses, spec_initial, scenes)
    ref = np.asarray(spec_initial.jitter_kernel)
    dists = capture_distances(poses, scenes)
    n_distances = len(np.unique(np.round(dists[np.isfinite(dists)], 3)))

    def loss_at(log_s, log_dt, offset, log_g, want_grad=False):
        s, dt, g = np.exp(log_s), np.exp(log_dt), np.exp(log_g)
        raw, draw = caps.binned(dt, want_grad)
        if not want_grad:
            kernel = resample_kernel(ref, s)
            h = g * _apply_kernel(raw, kernel, offset).T
            return histogram_loss(h, observed, cfg.loss_norm)[0], None
        kernel, dkernel = resample_kernel(ref, s, with_grad=True)
        base, d_off = _apply_kernel(raw, kernel, offset, True)
        h = g * base.T
        loss, dl = histogram_loss(h, observed, cfg.loss_norm)
        grad = np.array([
            s * np.sum(dl * g * _apply_kernel(raw, dkernel, offset).T),
            dt * np.sum(dl * g * _apply_kernel(draw, kernel, offset).T),
            np.sum(dl * g * d_off.T),
            np.sum(dl * h),
        ])
        return loss, grad

    # coarse grid over (kernel scale, bin width, offset), gain in closed form
    dt0 = spec_initial.bin_width_s
    off0 = spec_initial.temporal_offset_bins
    log_s0 = np.log(spec_initial.jitter_scale)
    offsets = off0 + 0.25 * np.arange(-int(4 * cfg.offset_search), int(4 * cfg.offset_search) + 1)
    n_rel = int(round(cfg.bin_width_search / 0.005))
    n_scale = int(round(cfg.scale_search / 0.05))
    kernels = [(ls, resample_kernel(ref, np.exp(ls))) for ls in log_s0 + 0.05 * np.arange(-n_scale, n_scale + 1)]
    best = (np.inf, log_s0, np.log(dt0), off0, 0.0)
    for rel in 0.005 * np.arange(-n_rel, n_rel + 1):
        raw, _ = caps.binned(dt0 * (1 + rel))
        for ls, kernel in kernels:
            h = _offset_table(raw, kernel, offsets)  # (n_off, S, B)
            if cfg.fit_gain:
                hh = np.einsum("osb,osb->o", h, h)
                g = np.where(hh > 0, np.einsum("osb,sb->o", h, observed) / np.where(hh > 0, hh, 1.0), 0.0)
            else:
                g = np.ones(len(offsets))
            r = g[:, None, None] * h - observed
            if cfg.loss_norm == "L2":
                losses = np.sqrt(np.einsum("osb,osb->os", r, r)).sum(axis=1)
            else:
                losses = np.abs(r).sum(axis=(1, 2))
            losses = np.where(g > 0, losses, np.inf)
            i = int(np.argmin(losses))
            if losses[i] < best[0]:
                best = (float(losses[i]), ls, np.log(dt0 * (1 + rel)), offsets[i], np.log(g[i]))

    z = np.array(best[1:])
    lr = np.array([cfg.lr_log_scale, cfg.lr_log_bin_width, cfg.lr_offset, cfg.lr_log_gain])
    mask = np.array([1.0, 1.0, 1.0, 1.0 if cfg.fit_gain else 0.0])
    opt = Adam(lr)
    trace = []
    best_z, best_loss = z.copy(), np.inf
    for step in range(cfg.steps + 1):
        loss, grad = loss_at(*z, want_grad=step < cfg.steps)
        trace.append(loss)
        if not np.isfinite(loss) or (grad is not None and not np.all(np.isfinite(grad))):
            raise DivergenceError(f"calibration diverged at step {step}", trace=np.array(trace))
        if loss < best_loss:
            best_z, best_loss = z.copy(), loss
        if grad is None:
            break
        z = opt.step(z, grad * mask)
    s, dt, off, g = np.exp(best_z[0]), np.exp(best_z[1]), float(best_z[2]), np.exp(best_z[3])
    return CalibResult(float(s), float(dt), off, float(g), float(best_loss), np.array(trace),
                       n_distances, n_distances < LOW_CONFIDENCE_DISTANCES)


def calibrated_spec(spec: SensorSpec, result: CalibResult) -> SensorSpec:
    return dataclasses.replace(spec, jitter_scale=result.s_scale, bin_width_s=result.bin_width_s,
                               temporal_offset_bins=result.temporal_offset_bins)
