"""Pose metrics and the point-cloud + ICP baseline."""

from .baseline import (
    POINTCLOUD_MODES,
    BaselineResult,
    IcpResult,
    PointCloud,
    icp_align,
    render_pointcloud,
    run_baseline,
)
from .metrics import (
    AUC_MAX_THRESHOLD,
    MetricReport,
    accuracy_curve,
    auc,
    compute_add,
    compute_add_s,
    sphere_errors,
)

__all__ = [
    "AUC_MAX_THRESHOLD", "BaselineResult", "IcpResult", "MetricReport", "POINTCLOUD_MODES", "PointCloud",
    "accuracy_curve", "auc", "compute_add", "compute_add_s", "icp_align", "render_pointcloud",
    "run_baseline", "sphere_errors",
]
