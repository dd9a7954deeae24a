"""Histogram discrepancy used by refinement, initialization and calibration."""

from __future__ import annotations

import numpy as np

from ..exceptions import ConfigurationError

LOSS_NORMS = ("L2", "L1")


def _normalize(h):
    total = h.sum(axis=-1, keepdims=True)
    return h / np.where(total > 0, total, 1.0), total


def histogram_loss(rendered, observed, norm: str = "L2", normalize: bool = False):
    """``sum_s ||rendered_s - observed_s||`` over sensors and its gradient w.r.t. ``rendered``.

    ``L2`` uses the (unsquared) Euclidean norm per sensor, ``L1`` the sum of
    absolute differences. With ``normalize`` both histograms are scaled to
    unit sum per sensor first.
    """
    if norm not in LOSS_NORMS:
        raise ConfigurationError(f"loss norm must be one of {LOSS_NORMS}, got {norm!r}")
    rendered = np.asarray(rendered, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if normalize:
        pred, total = _normalize(rendered)
        observed, _ = _normalize(observed)
    else:
        pred = rendered
    r = pred - observed
    if norm == "L2":
        n = np.sqrt(np.sum(r * r, axis=-1, keepdims=True))
        loss = float(n.sum())
        grad = r / np.where(n > 0, n, 1.0)
    else:
        loss = float(np.abs(r).sum())
        grad = np.sign(r)
    if normalize:
        safe = np.where(total > 0, total, 1.0)
        grad = (grad - np.sum(grad * pred, axis=-1, keepdims=True)) / safe
    return loss, grad


def check_observed(observed, rig) -> np.ndarray:
    obs = np.atleast_2d(np.asarray(observed, dtype=float))
    if obs.shape[0] != len(rig):
        raise ConfigurationError(f"{obs.shape[0]} observed histograms for a rig of {len(rig)} sensors")
    bins = {spec.n_bins for spec in rig.specs}
    if len(bins) != 1 or obs.shape[1] not in bins:
        raise ConfigurationError(f"observed histograms have {obs.shape[1]} bins, rig specs expect {sorted(bins)}")
    if not np.all(np.isfinite(obs)):
        raise ConfigurationError("observed histograms contain non-finite values")
    return obs
