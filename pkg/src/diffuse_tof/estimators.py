"""scikit-learn style wrappers around rendering, scene recovery and calibration.

The estimators hold configuration only in ``__init__`` (so ``get_params``,
``set_params`` and ``clone`` work), learn state in ``fit`` and expose it
through trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .datagen import Workspace, model_for
from .eval import compute_add, compute_add_s, sphere_errors
from .eval.metrics import auc
from .exceptions import ConfigurationError
from .optimize import CalibConfig, InitConfig, RefineConfig, calibrate_sensor, estimate_scene, refine
from .render import Rig, prepare_rays, render_rig


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


def _stack(X, rig: Rig) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (len(rig), rig.specs[0].n_bins):
        raise ConfigurationError(f"expected histograms of shape (n, {len(rig)}, {rig.specs[0].n_bins}), got {X.shape}")
    return X


class TransientRenderer(TransformerMixin, BaseEstimator):
    """Maps scene parameters to the rig's transient histograms.

    ``transform`` takes a sequence of :class:`PosedMeshParams` or
    :class:`SphereParams` and returns an array ``(n, S, B)``.
    """

    def __init__(self, rig: Rig, template=None, kind: str = "posed_mesh", workspace: Workspace | None = None,
                 poisson: bool = False, random_state=None):
        self.rig = rig
        self.template = template
        self.kind = kind
        self.workspace = workspace
        self.poisson = poisson
        self.random_state = random_state

    def fit(self, X=None, y=None):
        ws = Workspace() if self.workspace is None else self.workspace
        self.model_ = model_for(self.kind, self.template, ws.plane)
        self.rays_ = prepare_rays(self.rig)
        self.rng_ = np.random.default_rng(self.random_state)
        return self

    def transform(self, X):
        _check_fitted(self, "model_")
        return np.stack([render_rig(self.model_.scene(p), self.rig, self.rays_, self.poisson, self.rng_) for p in X])


class SceneEstimator(BaseEstimator):
    """Recovers scene parameters from histograms by initialization plus refinement.

    ``fit`` needs no training data: it binds the model and precomputes rays.
    ``predict`` maps ``(n, S, B)`` histograms to a list of parameter objects.
    Passing ``init`` to ``predict`` skips the multi-start stage and only refines.
    """

    def __init__(self, rig: Rig, template=None, kind: str = "posed_mesh", workspace: Workspace | None = None,
                 init_config: InitConfig | None = None, refine_config: RefineConfig | None = None,
                 n_jobs: int | None = 1):
        self.rig = rig
        self.template = template
        self.kind = kind
        self.workspace = workspace
        self.init_config = init_config
        self.refine_config = refine_config
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        ws = Workspace() if self.workspace is None else self.workspace
        self.model_ = model_for(self.kind, self.template, ws.plane)
        self.rays_ = prepare_rays(self.rig)
        return self

    def predict(self, X, init=None) -> list:
        _check_fitted(self, "model_")
        X = _stack(X, self.rig)
        out, self.losses_ = [], []
        for i, obs in enumerate(X):
            if init is None:
                res = estimate_scene(obs, self.model_, self.rig, self.init_config, self.refine_config,
                                     self.n_jobs).refined
            else:
                res = refine(init[i], obs, self.model_, self.rig, self.refine_config, self.rays_)
            out.append(res.params)
            self.losses_.append(res.loss)
        return out

    def score(self, X, y) -> float:
        """AUC of ADD (meshes) or of the center error (spheres) at 10 cm, in [0, 100]."""
        pred = self.predict(X)
        if self.kind == "sphere":
            errs = [sphere_errors(p, g)[1] for p, g in zip(pred, y)]
        else:
            pts = self.template.model_points()
            errs = [compute_add(p, g, pts) for p, g in zip(pred, y)]
        return auc(errs)

    def errors(self, pred, y) -> dict:
        """Per-sample error lists for predictions ``pred`` against ground truth ``y``."""
        if self.kind == "sphere":
            d, c = zip(*(sphere_errors(p, g) for p, g in zip(pred, y)))
            return {"diameter_error": list(d), "center_error": list(c)}
        pts = self.template.model_points()
        return {"add": [compute_add(p, g, pts) for p, g in zip(pred, y)],
                "add_s": [compute_add_s(p, g, pts) for p, g in zip(pred, y)]}


class SensorCalibrator(TransformerMixin, BaseEstimator):
    """Fits kernel scale, bin width and temporal offset from captures of known scenes.

    ``fit(X, poses)`` takes one histogram per capture and the matching
    sensor poses; ``transform`` maps sensor specs to calibrated ones.
    """

    def __init__(self, spec_initial, scenes=None, config: CalibConfig | None = None):
        self.spec_initial = spec_initial
        self.scenes = scenes
        self.config = config

    def fit(self, X, y):
        self.result_ = calibrate_sensor(X, y, self.spec_initial, self.scenes, self.config)
        self.spec_ = self.result_.apply(self.spec_initial)
        return self

    def transform(self, X):
        _check_fitted(self, "result_")
        return [self.result_.apply(s) for s in X]


__all__ = ["SceneEstimator", "SensorCalibrator", "TransientRenderer"]
