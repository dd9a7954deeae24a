import json
import subprocess
import sys

import numpy as np
import pytest

from diffuse_tof.cli import main
from diffuse_tof.datagen import dataset_digest
from diffuse_tof.formats import load_histograms, load_params, read_json, save_params
from diffuse_tof.grad import SphereParams

SMALL = ["--sensor", "grid_h=12", "--sensor", "grid_w=12"]
TINY_INIT = ["--init", "n_candidates=8", "--init", "n_orientations=4", "--init", "n_rounds=1",
             "--init", "n_survivors=1", "--init", "short_refine_steps=1", "--init", "rank_grid=6",
             "--init", "n_rescore=2"]


@pytest.fixture
def sphere_gt(tmp_path):
    return save_params(tmp_path / "gt.json", SphereParams((0.01, -0.02, 0.06), 0.12, 0.6, 0.4))


def run(*argv):
    return main([str(a) for a in argv])


def test_render_then_refine_round_trip(tmp_path, sphere_gt):
    r = tmp_path / "r"
    assert run("render", "--params", sphere_gt, "--out", r, "--n-sensors", 4, *SMALL) == 0
    hist, specs = load_histograms(r / "hist.csv")
    assert hist.shape == (4, 128) and specs[0].grid_h == 12
    f = tmp_path / "f"
    assert run("refine", "--rig", r / "rig.json", "--hist", r / "hist.csv", "--init-params", sphere_gt, "--out", f,
               "--refine", "steps=3") == 0
    data = read_json(f / "params.json")
    assert data["loss"] < 1e-6 * hist.sum()
    assert (f / "trace.csv").read_text().startswith("step,loss\n")


def test_manifest_fields(tmp_path, sphere_gt):
    assert run("render", "--params", sphere_gt, "--out", tmp_path, "--seed", 7, *SMALL) == 0
    m = read_json(tmp_path / "manifest.json")
    for key in ("tool", "version", "command", "seed", "config", "config_hash", "inputs"):
        assert key in m
    assert m["seed"] == 7 and m["command"] == "render"
    assert m["config"]["sensor"]["grid_h"] == 12
    assert "gt.json" in m["inputs"]


def test_config_file_and_flag_precedence(tmp_path, sphere_gt):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "sensor": {"grid_h": 10, "grid_w": 10}}))
    assert run("render", "--config", cfg, "--params", sphere_gt, "--out", tmp_path / "a", "--seed", 4) == 0
    m = read_json(tmp_path / "a" / "manifest.json")
    assert m["seed"] == 4 and m["config"]["sensor"]["grid_h"] == 10


def test_config_error_exit_code(tmp_path, sphere_gt, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "seed": 1,\n  "colour": "red"\n}')
    assert run("render", "--config", bad, "--params", sphere_gt, "--out", tmp_path) == 2
    assert "bad.json:3" in capsys.readouterr().err
    assert run("render", "--params", sphere_gt, "--out", tmp_path, "--refine", "bogus=1") == 2
    assert run("render", "--params", sphere_gt, "--out", tmp_path, "--sensor", "fov_deg=-5") == 2
    assert run("render", "--params", sphere_gt) == 2  # no --out


def test_seed_must_be_unsigned(tmp_path, sphere_gt):
    assert run("render", "--params", sphere_gt, "--out", tmp_path, "--seed", -1) == 2


def test_io_error_exit_code(tmp_path):
    assert run("render", "--params", tmp_path / "missing.json", "--out", tmp_path) == 4


def test_divergence_exit_code_writes_trace(tmp_path, sphere_gt, capsys):
    r = tmp_path / "r"
    run("render", "--params", sphere_gt, "--out", r, "--n-sensors", 3, *SMALL)
    far = save_params(tmp_path / "far.json", SphereParams((0.01, -0.02, 0.09), 0.2))
    code = run("refine", "--rig", r / "rig.json", "--hist", r / "hist.csv", "--init-params", far, "--out", tmp_path / "f",
               "--refine", "lr_diameter=10", "--refine", "steps=20")
    assert code == 3
    assert (tmp_path / "f" / "diverged_trace.csv").exists()
    assert "diverged_trace.csv" in capsys.readouterr().err


def test_datagen_is_deterministic_across_jobs(tmp_path):
    args = ["datagen", "--n", 3, "--n-sensors", 2, "--seed", 11, *SMALL]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--jobs", 2) == 0
    assert dataset_digest(tmp_path / "a") == dataset_digest(tmp_path / "b")
    m = read_json(tmp_path / "a" / "manifest.json")
    assert m["n_samples"] == 3 and m["template_hash"]


def test_initialize_then_eval(tmp_path):
    d = tmp_path / "data"
    run("datagen", "--n", 1, "--n-sensors", 3, "--position-noise", 0, "--out", d, *SMALL)
    s = d / "sample_000000"
    out = tmp_path / "init"
    assert run("initialize", "--rig", s / "rig.json", "--hist", s / "hist.csv", "--out", out, *TINY_INIT) == 0
    assert len((out / "candidates.csv").read_text().splitlines()) == 1 + 8 + 4
    ev = tmp_path / "eval"
    assert run("eval", "--pred", out / "params.json", "--gt", s / "params.json", "--out", ev) == 0
    summary = read_json(ev / "summary.json")
    assert summary["n"] == 1 and summary["median_add_s"] <= summary["median_add"]
    assert (ev / "accuracy.csv").exists()
    # a directory of ground truth against itself scores perfectly
    assert run("eval", "--pred", d, "--gt", d, "--out", tmp_path / "self") == 0
    assert read_json(tmp_path / "self" / "summary.json")["auc_add"] == pytest.approx(100.0)


def test_eval_rejects_mixed_kinds(tmp_path, sphere_gt):
    d = tmp_path / "data"
    run("datagen", "--n", 1, "--n-sensors", 1, "--out", d, *SMALL)
    code = run("eval", "--pred", sphere_gt, "--gt", d / "sample_000000" / "params.json", "--out", tmp_path / "e")
    assert code == 2


def test_calibrate_command(tmp_path):
    from diffuse_tof.formats import save_histograms, save_rig
    from diffuse_tof.geometry import Plane
    from diffuse_tof.render import Rig, SceneModel, SensorPose, SensorSpec, look_at, render_rig

    truth = SensorSpec(grid_h=12, grid_w=12, temporal_offset_bins=1.0)
    poses = [SensorPose((0, 0, h), look_at((0, 0, h), (0, 0, 0))) for h in (0.3, 0.5, 0.7)]
    hist = render_rig(SceneModel(None, Plane()), Rig(poses, truth))
    save_rig(tmp_path / "rig.json", Rig(poses, SensorSpec(grid_h=12, grid_w=12)))
    save_histograms(tmp_path / "h.csv", hist, SensorSpec(grid_h=12, grid_w=12))
    out = tmp_path / "cal"
    assert run("calibrate", "--rig", tmp_path / "rig.json", "--hist", tmp_path / "h.csv", "--out", out,
               "--calibrate", "steps=40") == 0
    res = read_json(out / "calibration.json")
    assert abs(res["temporal_offset_bins"] - 1.0) < 0.1
    assert res["spec"]["grid_h"] == 12


def test_baseline_command(tmp_path):
    d = tmp_path / "data"
    run("datagen", "--n", 1, "--n-sensors", 15, "--out", d, *SMALL)
    s = d / "sample_000000"
    assert run("baseline", "--gt", s / "params.json", "--rig", s / "rig.json", "--mode", "grid16",
               "--out", tmp_path / "b") == 0
    res = read_json(tmp_path / "b" / "baseline.json")
    assert res["add"] < 1e-3 and res["n_points"] > 0


def test_gradcheck_command(tmp_path, capsys):
    assert run("gradcheck", "--kind", "sphere", "--n-scenes", 1, "--n-sensors", 2, "--out", tmp_path,
               *SMALL) == 0
    assert "PASS" in capsys.readouterr().out
    assert (tmp_path / "gradcheck.csv").read_text().count("\n") == 1 + 6


def test_ablate_changes_histograms(tmp_path):
    assert run("ablate", "--variant", "delta-kernel", "--variant", "wrong-fov", "--n-sensors", 3,
               "--out", tmp_path, *SMALL) == 0
    res = read_json(tmp_path / "ablation.json")
    assert res["delta-kernel"]["l1_difference"] > 0
    assert res["wrong-fov"]["l1_difference"] > 0
    full, _ = load_histograms(tmp_path / "hist_full.csv")
    alt, specs = load_histograms(tmp_path / "hist_delta-kernel.csv")
    assert np.abs(full - alt).sum() > 0 and max(specs[0].jitter_kernel) == 1.0
    assert isinstance(load_params(tmp_path / "params.json").translation, np.ndarray)


def test_viewsweep_is_deterministic(tmp_path):
    args = ["viewsweep", "--budgets", 1, 2, "--n-scenes", 2, "--seed", 5, "--refine", "steps=2", *SMALL, *TINY_INIT]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--jobs", 2) == 0
    for name in ("viewsweep_runs.csv", "viewsweep_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read_json(tmp_path / "a" / "manifest.json")["sweep"]["poisson"] is True


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "diffuse_tof.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "diffuse" in out.stdout
