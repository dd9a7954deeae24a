"""Gradients of rendered histograms w.r.t. scene parameters."""

from .engine import (
    GradCheckReport,
    GradientRecord,
    ParametricModel,
    default_fd_steps,
    finite_diff_gradient,
    finite_diff_jacobian,
    frozen_visibility_renderer,
    gradient_check,
    render_with_grad,
)
from .params import (
    PosedMeshModel,
    PosedMeshParams,
    SceneParams,
    SphereModel,
    SphereParams,
    params_from_dict,
)

__all__ = [
    "GradCheckReport", "GradientRecord", "ParametricModel", "PosedMeshModel", "PosedMeshParams", "SceneParams",
    "SphereModel", "SphereParams", "default_fd_steps", "finite_diff_gradient",
    "finite_diff_jacobian", "frozen_visibility_renderer", "gradient_check", "params_from_dict", "render_with_grad",
]
