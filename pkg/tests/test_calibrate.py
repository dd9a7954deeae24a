import numpy as np
import pytest

from diffuse_tof.exceptions import ConfigurationError
from diffuse_tof.geometry import Plane
from diffuse_tof.optimize import CalibConfig, calibrate_sensor, calibrated_spec, capture_distances
from diffuse_tof.render import SceneModel, SensorPose, SensorSpec, look_at, render

PLANE = SceneModel(None, Plane())
SPEC0 = SensorSpec(grid_h=16, grid_w=16)


def captures(heights, truth, gain=1.0):
    poses = [SensorPose((0.0, 0.0, h), look_at((0, 0, h), (0, 0, 0))) for h in heights]
    obs = np.stack([gain * render(PLANE, truth, p).counts for p in poses])
    return poses, obs


def test_capture_distances():
    poses, _ = captures([0.3, 0.7], SPEC0)
    np.testing.assert_allclose(capture_distances(poses, [PLANE, PLANE]), [0.3, 0.7])
    away = SensorPose((0, 0, 0.5), look_at((0, 0, 0.5), (0, 0, 1)))
    assert np.isinf(capture_distances([away], [PLANE])[0])


def test_recovers_known_sensor():
    truth = SPEC0.replace(jitter_scale=1.15, bin_width_s=SPEC0.bin_width_s * 1.03, temporal_offset_bins=2.25)
    poses, obs = captures([0.3, 0.45, 0.6, 0.75, 0.9], truth)
    res = calibrate_sensor(obs, poses, SPEC0, cfg=CalibConfig(steps=150))
    assert res.bin_width_s == pytest.approx(truth.bin_width_s, rel=0.01)
    assert abs(res.temporal_offset_bins - 2.25) < 0.1
    assert res.s_scale == pytest.approx(1.15, rel=0.05)
    assert not res.low_confidence
    spec = calibrated_spec(SPEC0, res)
    assert spec == res.apply(SPEC0)
    assert spec.jitter_scale == res.s_scale


def test_recovers_global_gain():
    poses, obs = captures([0.3, 0.5, 0.8], SPEC0, gain=1.7)
    res = calibrate_sensor(obs, poses, SPEC0, cfg=CalibConfig(steps=50))
    assert res.gain == pytest.approx(1.7, rel=0.01)


def test_single_distance_is_flagged():
    poses, obs = captures([0.5, 0.5], SPEC0)
    res = calibrate_sensor(obs, poses, SPEC0, cfg=CalibConfig(steps=5))
    assert res.low_confidence and res.n_distances == 1


def test_trace_is_best_at_result():
    poses, obs = captures([0.3, 0.6, 0.9], SPEC0.replace(temporal_offset_bins=-1.0))
    res = calibrate_sensor(obs, poses, SPEC0, cfg=CalibConfig(steps=30))
    assert res.residual == pytest.approx(res.trace.min())
    assert set(res.to_dict()) >= {"s_scale", "bin_width_s", "temporal_offset_bins", "gain", "residual"}


def test_input_validation():
    poses, obs = captures([0.3, 0.6], SPEC0)
    with pytest.raises(ConfigurationError):
        calibrate_sensor(obs[:1], poses, SPEC0)
    with pytest.raises(ConfigurationError):
        calibrate_sensor(obs, [], SPEC0)
    with pytest.raises(ConfigurationError):
        calibrate_sensor(obs, poses, SPEC0, scenes=[PLANE])
