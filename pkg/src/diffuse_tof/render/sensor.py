"""Sensor description: optics, timing, laser profile and the ray quadrature."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from ..exceptions import ConfigurationError, InvalidParameterError

SPEED_OF_LIGHT = 299_792_458.0  # m/s
BIN_DEPTH = 0.014  # m of depth per bin
DEFAULT_BIN_WIDTH = 2 * BIN_DEPTH / SPEED_OF_LIGHT  # s, two-way
DEFAULT_SOFT_BIN_SHARPNESS = 20.0  # k * bin width
INTENSITY_K = (0.88, -3.16, 250.51)


def reference_pulse(n_taps: int = 10, peak: float = 2.0, sigma: float = 0.7, tail: float = 1.6) -> np.ndarray:
    """Synthetic stand-in for a sensor's reference histogram.

    An exponentially tailed Gaussian pulse sampled on integer taps and
    normalized to unit sum; used as the default jitter kernel.
    """
    x = np.arange(n_taps, dtype=float)
    rise = np.exp(-0.5 * ((x - peak) / sigma) ** 2)
    fall = np.exp(-(x - peak) / tail)
    s = np.where(x <= peak, rise, np.maximum(fall, rise))
    return s / s.sum()


def _as_kernel(kernel) -> tuple[float, ...]:
    k = np.asarray(kernel, dtype=float).ravel()
    if k.size == 0 or np.any(k < 0) or not np.all(np.isfinite(k)) or k.sum() <= 0:
        raise InvalidParameterError("jitter kernel must be finite, non-negative and non-zero")
    return tuple((k / k.sum()).tolist())


@dataclass(frozen=True)
class SensorSpec:
    """Physical and calibration parameters of one diffuse single-pixel sensor.

    ``soft_bin_k`` is the sigmoid sharpness in 1/s; ``None`` means
    ``DEFAULT_SOFT_BIN_SHARPNESS / bin_width_s``. The jitter kernel is stored
    normalized and is resampled by ``jitter_scale`` before use.
    """

    fov_deg: float = 32.0
    grid_h: int = 64
    grid_w: int = 64
    n_bins: int = 128
    bin_width_s: float = DEFAULT_BIN_WIDTH
    temporal_offset_bins: float = 0.0
    n_emit: float = 1e6
    intensity_k: tuple[float, float, float] = INTENSITY_K
    intensity_model: str = "fitted"
    soft_bin_k: float | None = None
    jitter_kernel: tuple[float, ...] = field(default_factory=lambda: tuple(reference_pulse().tolist()))
    jitter_scale: float = 1.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not 0 < self.fov_deg < 180:
            raise InvalidParameterError("fov_deg must lie in (0, 180)")
        if self.grid_h < 2 or self.grid_w < 2:
            raise InvalidParameterError("ray grid must be at least 2x2")
        if self.n_bins < 1:
            raise InvalidParameterError("n_bins must be >= 1")
        if not self.bin_width_s > 0:
            raise InvalidParameterError("bin_width_s must be positive")
        if not self.n_emit > 0:
            raise InvalidParameterError("n_emit must be positive")
        if not self.jitter_scale > 0:
            raise InvalidParameterError("jitter_scale must be positive")
        if self.soft_bin_k is not None and not self.soft_bin_k > 0:
            raise InvalidParameterError("soft_bin_k must be positive")
        if self.intensity_model not in ("fitted", "constant"):
            raise InvalidParameterError("intensity_model must be 'fitted' or 'constant'")
        object.__setattr__(self, "grid_h", int(self.grid_h))
        object.__setattr__(self, "grid_w", int(self.grid_w))
        object.__setattr__(self, "n_bins", int(self.n_bins))
        object.__setattr__(self, "intensity_k", tuple(float(x) for x in self.intensity_k))
        object.__setattr__(self, "jitter_kernel", _as_kernel(self.jitter_kernel))

    @property
    def k(self) -> float:
        if self.soft_bin_k is None:
            return DEFAULT_SOFT_BIN_SHARPNESS / self.bin_width_s
        return float(self.soft_bin_k)

    @property
    def half_tan(self) -> float:
        return float(np.tan(np.deg2rad(self.fov_deg) / 2))

    @property
    def bin_depth_m(self) -> float:
        return self.bin_width_s * self.c / 2

    def effective_kernel(self) -> np.ndarray:
        from .jitter import resample_kernel

        return resample_kernel(np.asarray(self.jitter_kernel), self.jitter_scale)

    def replace(self, **changes) -> SensorSpec:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["intensity_k"] = list(self.intensity_k)
        d["jitter_kernel"] = list(self.jitter_kernel)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> SensorSpec:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown SensorSpec field(s): {sorted(unknown)}")
        data = dict(data)
        for key in ("intensity_k", "jitter_kernel"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def look_at(position, target, up=(0.0, 0.0, 1.0), roll: float = 0.0) -> np.ndarray:
    """Orientation whose +z optical axis points from ``position`` at ``target``."""
    z = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    if abs(z @ up) > 0.999:
        up = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r = np.stack([x, y, z], axis=1)
    if roll:
        c, s = np.cos(roll), np.sin(roll)
        r = r @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    return r


@dataclass(frozen=True, eq=False)
class SensorPose:
    """World-frame sensor placement; orientation columns are the sensor axes."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        r = np.array(self.orientation, dtype=float).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) < 0:
            raise InvalidParameterError("sensor orientation must be a rotation matrix")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", r)

    @property
    def optical_axis(self) -> np.ndarray:
        return self.orientation[:, 2].copy()

    def transformed(self, rotation, translation) -> SensorPose:
        rotation = np.asarray(rotation, dtype=float)
        return SensorPose(rotation @ self.position + translation, rotation @ self.orientation)


@dataclass(frozen=True, eq=False)
class Rig:
    """Ordered sensor poses with one shared spec or one spec per sensor."""

    poses: tuple[SensorPose, ...]
    specs: tuple[SensorSpec, ...]

    def __init__(self, poses: Sequence[SensorPose], specs: SensorSpec | Sequence[SensorSpec] | None = None):
        poses = tuple(poses)
        if specs is None:
            specs = SensorSpec()
        if isinstance(specs, SensorSpec):
            specs = (specs,) * len(poses)
        specs = tuple(specs)
        if len(specs) != len(poses):
            raise ConfigurationError(f"rig has {len(poses)} poses but {len(specs)} specs")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "specs", specs)

    def __len__(self):
        return len(self.poses)

    def subset(self, n: int) -> Rig:
        return Rig(self.poses[:n], self.specs[:n])

    def with_specs(self, specs) -> Rig:
        return Rig(self.poses, specs)

    def transformed(self, rotation, translation) -> Rig:
        return Rig([p.transformed(rotation, translation) for p in self.poses], self.specs)


class RayGrid(NamedTuple):
    origin: np.ndarray  # (3,)
    directions: np.ndarray  # (n, 3) world frame, unit
    local_directions: np.ndarray  # (n, 3) sensor frame, unit
    weights: np.ndarray  # (n,) solid-angle quadrature Q


def pixel_directions(half_tan: float, h: int, w: int) -> np.ndarray:
    """Unit sensor-frame directions through pixel centers on the plane z = 1."""
    ys = (np.arange(h) + 0.5) / h * 2 * half_tan - half_tan
    xs = (np.arange(w) + 0.5) / w * 2 * half_tan - half_tan
    gx, gy = np.meshgrid(xs, ys)
    d = np.stack([gx.ravel(), gy.ravel(), np.ones(h * w)], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def generate_ray_grid(spec: SensorSpec, pose: SensorPose) -> RayGrid:
    """``h*w`` pixel-center rays with quadrature ``4 tan^2(FoV/2) w_z^3 / (h w)``."""
    local = pixel_directions(spec.half_tan, spec.grid_h, spec.grid_w)
    q = 4 * spec.half_tan**2 * local[:, 2] ** 3 / (spec.grid_h * spec.grid_w)
    return RayGrid(pose.position.copy(), local @ pose.orientation.T, local, q)


def laser_intensity(omega, k=INTENSITY_K, model: str = "fitted") -> np.ndarray:
    """Laser intensity along sensor-frame unit directions ``omega`` (..., 3).

    ``K1 exp(-K2 (wx^2 + wy^2) - K3 (wx^4 + wy^4))``; the ``constant`` model
    returns ``K1`` everywhere.
    """
    omega = np.asarray(omega, dtype=float)
    k1, k2, k3 = k
    if model == "constant":
        return np.full(omega.shape[:-1], k1)
    wx, wy = omega[..., 0], omega[..., 1]
    return k1 * np.exp(-k2 * (wx**2 + wy**2) - k3 * (wx**4 + wy**4))


def soft_bin_weight(t, i, spec: SensorSpec):
    """Sigmoid-difference membership of two-way time ``t`` in bin ``i``."""
    k, dt = spec.k, spec.bin_width_s
    t = np.asarray(t, dtype=float)
    ti = np.asarray(i, dtype=float) * dt
    return expit(k * (t - ti)) - expit(k * (t - ti - dt))
