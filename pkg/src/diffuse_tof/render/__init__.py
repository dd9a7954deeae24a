"""Differentiable forward imaging model for diffuse single-pixel ToF sensors."""

from .forward import (
    Contributions,
    RigRays,
    bin_contributions,
    prepare_rays,
    ray_contributions,
    render,
    render_parts,
    render_raw,
    render_rig,
    split_sensors,
)
from .jitter import convolve_jitter, resample_kernel, shift_convolve
from .scene import SceneModel, TransientHistogram
from .sensor import (
    DEFAULT_BIN_WIDTH,
    INTENSITY_K,
    SPEED_OF_LIGHT,
    RayGrid,
    Rig,
    SensorPose,
    SensorSpec,
    generate_ray_grid,
    laser_intensity,
    look_at,
    pixel_directions,
    reference_pulse,
    soft_bin_weight,
)

__all__ = [
    "Contributions", "DEFAULT_BIN_WIDTH", "INTENSITY_K", "RayGrid", "Rig", "RigRays",
    "SPEED_OF_LIGHT", "SceneModel", "SensorPose", "SensorSpec", "TransientHistogram",
    "bin_contributions", "convolve_jitter", "generate_ray_grid", "laser_intensity", "look_at",
    "pixel_directions", "prepare_rays", "ray_contributions", "reference_pulse", "render",
    "render_parts", "render_raw", "render_rig", "resample_kernel", "shift_convolve",
    "soft_bin_weight", "split_sensors",
]
