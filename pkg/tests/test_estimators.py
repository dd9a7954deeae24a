import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from diffuse_tof.datagen import sample_rig
from diffuse_tof.estimators import SceneEstimator, SensorCalibrator, TransientRenderer
from diffuse_tof.exceptions import ConfigurationError
from diffuse_tof.geometry import Plane
from diffuse_tof.grad import SphereParams
from diffuse_tof.optimize import CalibConfig, InitConfig, RefineConfig
from diffuse_tof.render import Rig, SceneModel, SensorPose, SensorSpec, look_at, render_rig

SPEC = SensorSpec(grid_h=12, grid_w=12)


@pytest.fixture(scope="module")
def rig():
    return sample_rig(np.random.default_rng(4), 3, SPEC)


def test_get_params_and_clone(rig, template):
    est = SceneEstimator(rig, template, refine_config=RefineConfig(steps=5), n_jobs=2)
    params = est.get_params()
    assert params["n_jobs"] == 2 and params["refine_config"].steps == 5
    twin = clone(est)
    assert len(twin.get_params()["rig"]) == len(rig) and not hasattr(twin, "model_")
    est.set_params(n_jobs=1)
    assert est.n_jobs == 1


def test_renderer_transform(rig, posed_scene):
    params, model, _ = posed_scene
    r = TransientRenderer(rig, model.template).fit()
    out = r.transform([params, params])
    assert out.shape == (2, 3, 128)
    np.testing.assert_array_equal(out[0], render_rig(model.scene(params), rig))


def test_renderer_poisson_random_state(rig, posed_scene):
    params, model, _ = posed_scene
    a = TransientRenderer(rig, model.template, poisson=True, random_state=1).fit().transform([params])
    b = TransientRenderer(rig, model.template, poisson=True, random_state=1).fit().transform([params])
    np.testing.assert_array_equal(a, b)


def test_unfitted_raises(rig, template):
    with pytest.raises(NotFittedError):
        TransientRenderer(rig, template).transform([])
    with pytest.raises(NotFittedError):
        SceneEstimator(rig, template).predict(np.zeros((3, 128)))
    with pytest.raises(NotFittedError):
        SensorCalibrator(SPEC).transform([SPEC])


def test_predict_from_init_is_a_fixed_point(rig):
    gt = SphereParams((0.0, 0.01, 0.05), 0.1, 0.5, 0.5)
    X = TransientRenderer(rig, kind="sphere").fit().transform([gt])
    est = SceneEstimator(rig, kind="sphere", refine_config=RefineConfig(steps=3)).fit()
    pred = est.predict(X, init=[gt])
    np.testing.assert_allclose(pred[0].to_vector(), gt.to_vector(), atol=1e-9)
    errs = est.errors(pred, [gt])
    assert errs["diameter_error"][0] < 1e-9


def test_predict_and_score_pipeline():
    rig = sample_rig(np.random.default_rng(6), 10, SensorSpec(grid_h=24, grid_w=24))
    gt = SphereParams((0.03, -0.02, 0.07), 0.14, 0.6, 0.5)
    X = TransientRenderer(rig, kind="sphere").fit().transform([gt])
    est = SceneEstimator(rig, kind="sphere", init_config=InitConfig(n_candidates=256, rank_grid=12),
                         refine_config=RefineConfig(steps=60)).fit()
    assert est.score(X, [gt]) > 90
    assert len(est.losses_) == 1


def test_predict_checks_shapes(rig, template):
    est = SceneEstimator(rig, template).fit()
    with pytest.raises(ConfigurationError):
        est.predict(np.zeros((2, 128)))


def test_calibrator(tmp_path):
    truth = SPEC.replace(temporal_offset_bins=-1.5)
    poses = [SensorPose((0, 0, h), look_at((0, 0, h), (0, 0, 0))) for h in (0.3, 0.55, 0.8)]
    X = render_rig(SceneModel(None, Plane()), Rig(poses, truth))
    cal = SensorCalibrator(SPEC, config=CalibConfig(steps=30)).fit(X, poses)
    assert abs(cal.spec_.temporal_offset_bins + 1.5) < 0.1
    (out,) = cal.transform([SPEC.replace(n_emit=2e6)])
    assert out.n_emit == 2e6 and out.temporal_offset_bins == cal.spec_.temporal_offset_bins
