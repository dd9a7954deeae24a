import json

import numpy as np
import pytest

from diffuse_tof.config import ExperimentConfig
from diffuse_tof.datagen import Workspace
from diffuse_tof.exceptions import ConfigurationError, InvalidParameterError
from diffuse_tof.experiments import (ABLATION_VARIANTS, AblationConfig, ViewSweepConfig, ablated_spec,
                                     ablation_histograms, pose_scene)
from diffuse_tof.grad import PosedMeshModel
from diffuse_tof.parallel import JOBS_ENV, parallel_map, resolve_jobs
from diffuse_tof.render import SensorSpec


def write(tmp_path, text):
    p = tmp_path / "cfg.json"
    p.write_text(text)
    return p


class TestConfig:
    def test_defaults_validate(self):
        cfg = ExperimentConfig()
        cfg.validate()
        assert cfg.sensor_spec() == SensorSpec()
        assert cfg.init_config().seed == 0

    def test_sections_build_objects(self, tmp_path):
        p = write(tmp_path, json.dumps({"seed": 9, "sensor": {"fov_deg": 30, "jitter_kernel": [1, 2, 1]},
                                        "refine": {"steps": 50}, "init": {"n_candidates": 64},
                                        "workspace": {"radius": 0.1}}))
        cfg = ExperimentConfig.from_json(p)
        assert cfg.sensor_spec().fov_deg == 30
        assert cfg.sensor_spec().jitter_kernel == (0.25, 0.5, 0.25)
        assert cfg.refine_config().steps == 50
        init = cfg.init_config()
        assert init.n_candidates == 64 and init.seed == 9 and init.workspace.radius == 0.1

    def test_unknown_field_reports_line(self, tmp_path):
        p = write(tmp_path, '{\n  "seed": 1,\n\n  "sensr": {}\n}')
        with pytest.raises(ConfigurationError, match=r"cfg.json:4: unknown field 'sensr'"):
            ExperimentConfig.from_json(p)

    def test_unknown_section_field_reports_line(self, tmp_path):
        p = write(tmp_path, '{\n  "refine": {\n    "stepz": 3\n  }\n}')
        with pytest.raises(ConfigurationError, match=r"cfg.json:3"):
            ExperimentConfig.from_json(p)

    def test_invalid_value_and_json(self, tmp_path):
        with pytest.raises(ConfigurationError, match="section 'sensor'"):
            ExperimentConfig(sensor={"n_bins": 0}).validate()
        with pytest.raises(ConfigurationError, match="cfg.json:2"):
            ExperimentConfig.from_json(write(tmp_path, '{\n  "seed": ,\n}'))
        with pytest.raises(ConfigurationError):
            ExperimentConfig(kind="other")
        with pytest.raises(ConfigurationError):
            ExperimentConfig(seed=2**64)

    def test_override_keeps_original(self):
        base = ExperimentConfig(refine={"steps": 10})
        new = base.override(seed=3, mesh=None, **{"refine.steps": 20, "sensor.grid_h": 8})
        assert base.refine == {"steps": 10} and base.seed == 0
        assert new.refine_config().steps == 20 and new.sensor_spec().grid_h == 8 and new.seed == 3

    def test_digest_ignores_paths(self):
        a = ExperimentConfig(output="/tmp/a", mesh=None)
        b = ExperimentConfig(output="/tmp/b")
        assert a.digest() == b.digest()
        assert a.digest() != ExperimentConfig(seed=1).digest()


class TestParallel:
    def test_resolve_jobs(self, monkeypatch):
        monkeypatch.setenv(JOBS_ENV, "3")
        assert resolve_jobs(None) == 3
        assert resolve_jobs(2) == 2
        assert resolve_jobs(0) >= 1
        monkeypatch.setenv(JOBS_ENV, "junk")
        assert resolve_jobs(None) == 1

    def test_order_preserved(self):
        assert parallel_map(abs, [-3, 1, -2], jobs=2) == [3, 1, 2]


class TestExperiments:
    def test_variant_specs(self):
        spec = SensorSpec()
        assert ablated_spec(spec, "full") is spec
        delta = ablated_spec(spec, "delta-kernel")
        k = delta.effective_kernel()
        assert k.max() == 1.0 and np.argmax(k) == np.argmax(spec.effective_kernel())
        assert ablated_spec(spec, "wrong-bin-size").bin_depth_m == pytest.approx(0.014 * 1.2 / 1.38)
        wide = ablated_spec(spec, "wrong-fov")
        assert wide.fov_deg == 38 and wide.intensity_model == "constant"
        with pytest.raises(InvalidParameterError):
            ablated_spec(spec, "wrong-colour")

    @pytest.mark.parametrize("variant", [v for v in ABLATION_VARIANTS if v != "full"])
    def test_variants_change_histograms(self, template, variant):
        scene = pose_scene(template, 0, 0, 3, SensorSpec(grid_h=12, grid_w=12))
        model = PosedMeshModel(template, Workspace().plane)
        full, alt = ablation_histograms(model.scene(scene.gt), scene.rig, variant)
        assert np.abs(full - alt).sum() > 1e-3 * full.sum()

    def test_pose_scene_is_seeded(self, template):
        a = pose_scene(template, 4, 2, 3, SensorSpec(grid_h=8, grid_w=8), poisson=True)
        b = pose_scene(template, 4, 2, 3, SensorSpec(grid_h=8, grid_w=8), poisson=True)
        np.testing.assert_array_equal(a.observed, b.observed)
        np.testing.assert_array_equal(a.gt.to_vector(), b.gt.to_vector())

    def test_config_validation(self):
        with pytest.raises(InvalidParameterError):
            ViewSweepConfig(budgets=())
        with pytest.raises(InvalidParameterError):
            AblationConfig(variants=("full", "nope"))
        assert ViewSweepConfig().to_dict()["spec"]["fov_deg"] == 32
