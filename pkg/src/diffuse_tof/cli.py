"""Command-line interface: ``diffuse-tof <command> [options]``.

Every command reads an optional JSON config (``--config``), applies flag
overrides on top (flags win), writes its artifacts to ``--out`` and a
``manifest.json`` recording the tool version, seed, resolved config and its
hash. Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .datagen import DatasetConfig, generate_dataset, generate_sample, model_for, sample_rig
from .eval import MetricReport, accuracy_curve, run_baseline
from .exceptions import ConfigurationError, DivergenceError, InvalidParameterError
from .experiments import (ABLATION_VARIANTS, VIEW_BUDGETS, AblationConfig, ViewSweepConfig, ablation_histograms,
                          ablated_spec, pose_scene, run_ablation, run_viewsweep)
from .formats import (dumps, file_digest, load_histograms, load_params, load_rig, save_histograms, save_params,
                      save_rig, save_table, save_trace, write_json)
from .geometry import TriangleMesh, asymmetric_test_mesh, load_obj
from .grad import PosedMeshParams, SphereParams, gradient_check
from .optimize import calibrate_sensor, initialize, refine
from .parallel import JOBS_ENV, resolve_jobs
from .render import Rig, render_rig

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# -- helpers ---------------------------------------------------------------------

def _key_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    flags = {"seed": args.seed, "mesh": args.mesh, "mesh_scale": args.mesh_scale, "output": args.out}
    for section in ("sensor", "refine", "init", "calibrate", "workspace"):
        for key, value in getattr(args, section) or []:
            flags[f"{section}.{key}"] = value
    cfg = cfg.override(**flags)
    cfg.validate()
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if not cfg.output:
        raise ConfigurationError("--out: an output directory is required")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _template(cfg: ExperimentConfig) -> TriangleMesh:
    """The OBJ named in the config, or the built-in asymmetric test mesh."""
    if cfg.mesh:
        return load_obj(cfg.mesh, cfg.mesh_scale)
    return asymmetric_test_mesh()


def _manifest(out: Path, command: str, cfg: ExperimentConfig, inputs=(), template=None, **extra) -> Path:
    manifest = {
        "tool": "diffuse_tof",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "inputs": {Path(p).name: file_digest(p) for p in inputs if p},
        "template_hash": None if template is None else template.digest(),
        **extra,
    }
    return write_json(out / "manifest.json", manifest)


def _rig_and_observed(args, cfg: ExperimentConfig) -> tuple[Rig, np.ndarray]:
    """Rig from ``--rig``, with the histogram sidecar's specs and then config overrides applied."""
    rig = load_rig(args.rig)
    observed, specs = load_histograms(args.hist)
    if len(observed) != len(rig):
        raise ConfigurationError(f"{args.hist}: {len(observed)} histograms for {len(rig)} sensors in {args.rig}")
    rig = rig.with_specs([cfg.sensor_spec(s) for s in specs])
    return rig, observed


def _model_for_params(params, cfg: ExperimentConfig):
    ws = cfg.workspace_config()
    if isinstance(params, SphereParams):
        return model_for("sphere", None, ws.plane), None
    template = _template(cfg)
    return model_for("posed_mesh", template, ws.plane), template


def _kind_model(kind: str, cfg: ExperimentConfig):
    ws = cfg.workspace_config()
    template = None if kind == "sphere" else _template(cfg)
    return model_for(kind, template, ws.plane), template


# -- commands ----------------------------------------------------------------------

def cmd_render(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    params = load_params(args.params)
    model, template = _model_for_params(params, cfg)
    if args.rig:
        rig = load_rig(args.rig)
        rig = rig.with_specs([cfg.sensor_spec(s) for s in rig.specs])
    else:
        rig = sample_rig(np.random.default_rng(cfg.seed), args.n_sensors, cfg.sensor_spec(),
                         cfg.workspace_config().center3)
    rng = np.random.default_rng(cfg.seed)
    hist = render_rig(model.scene(params), rig, poisson=args.poisson, rng=rng)
    save_histograms(out / "hist.csv", hist, rig.specs)
    save_rig(out / "rig.json", rig)
    _manifest(out, "render", cfg, [args.params, args.rig], template, poisson=args.poisson)
    print(f"wrote {len(rig)} histograms to {out / 'hist.csv'}")
    return EXIT_OK


def cmd_datagen(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    template = None if args.kind == "sphere" else _template(cfg)
    dcfg = DatasetConfig(kind=args.kind, n_sensors=args.n_sensors, spec=cfg.sensor_spec(),
                         workspace=cfg.workspace_config(), position_noise=args.position_noise, poisson=args.poisson)
    generate_dataset(template, args.n, dcfg, cfg.seed, out, resolve_jobs(args.jobs))
    # replaces the library's dataset manifest with a superset of its fields
    _manifest(out, "datagen", cfg, [], template, dataset=dcfg.to_dict(), n_samples=args.n)
    print(f"wrote {args.n} samples to {out}")
    return EXIT_OK


def cmd_initialize(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    rig, observed = _rig_and_observed(args, cfg)
    model, template = _kind_model(args.kind, cfg)
    res = initialize(observed, model, rig, cfg.init_config(), cfg.refine_config(), resolve_jobs(args.jobs))
    save_params(out / "params.json", res.params, loss=res.loss)
    save_table(out / "candidates.csv", [{"candidate": i, "loss": float(l)} for i, l in enumerate(res.candidate_losses)])
    _manifest(out, "initialize", cfg, [args.rig, args.hist], template)
    print(f"initial loss {res.loss:.6g}; parameters in {out / 'params.json'}")
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    rig, observed = _rig_and_observed(args, cfg)
    init = load_params(args.init_params)
    model, template = _model_for_params(init, cfg)
    res = refine(init, observed, model, rig, cfg.refine_config())
    save_params(out / "params.json", res.params, loss=res.loss, best_step=res.best_step)
    save_trace(out / "trace.csv", res.trace)
    _manifest(out, "refine", cfg, [args.rig, args.hist, args.init_params], template)
    print(f"loss {res.initial_loss:.6g} -> {res.loss:.6g} (best step {res.best_step})")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    rig, observed = _rig_and_observed(args, cfg)
    res = calibrate_sensor(observed, rig.poses, rig.specs[0], None, cfg.calib_config())
    write_json(out / "calibration.json", {**res.to_dict(), "spec": res.apply(rig.specs[0]).to_dict()})
    save_trace(out / "trace.csv", res.trace)
    _manifest(out, "calibrate", cfg, [args.rig, args.hist])
    if res.low_confidence:
        print(f"warning: only {res.n_distances} distinct capture distance(s); bin width and offset are poorly "
              "separated", file=sys.stderr)
    print(f"s_scale {res.s_scale:.6g}, bin width {res.bin_width_s:.6g} s, offset {res.temporal_offset_bins:.6g} bins")
    return EXIT_OK


def _param_files(path) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        files = sorted(p.rglob("params.json"))
        if not files:
            raise ConfigurationError(f"{p}: no params.json files found")
        return files
    if not p.exists():
        raise FileNotFoundError(p)
    return [p]


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    pred_files, gt_files = _param_files(args.pred), _param_files(args.gt)
    if len(pred_files) != len(gt_files):
        raise ConfigurationError(f"{len(pred_files)} predictions for {len(gt_files)} ground-truth files")
    report = MetricReport()
    rows = []
    pts = None
    for pf, gf in zip(pred_files, gt_files):
        pred, gt = load_params(pf), load_params(gf)
        if type(pred) is not type(gt):
            raise ConfigurationError(f"{pf}: parameter kind differs from {gf}")
        if isinstance(gt, SphereParams):
            report.add_sphere(pred, gt)
            rows.append({"pred": str(pf), "gt": str(gf), "diameter_error": report.diameter_error[-1],
                         "center_error": report.center_error[-1]})
        else:
            pts = _template(cfg).model_points() if pts is None else pts
            report.add_pose(pred, gt, pts)
            rows.append({"pred": str(pf), "gt": str(gf), "add": report.add[-1], "add_s": report.add_s[-1]})
    save_table(out / "metrics.csv", rows)
    write_json(out / "summary.json", report.summary())
    if report.add:
        t, acc_add = accuracy_curve(report.add)
        _, acc_adds = accuracy_curve(report.add_s)
        save_table(out / "accuracy.csv", [{"threshold": float(a), "acc_add": float(b), "acc_add_s": float(c)}
                                          for a, b, c in zip(t, acc_add, acc_adds)])
    _manifest(out, "eval", cfg, [*pred_files, *gt_files])
    print(dumps(report.summary()), end="")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    gt = load_params(args.gt)
    if not isinstance(gt, PosedMeshParams):
        raise ConfigurationError(f"{args.gt}: the point-cloud baseline needs posed-mesh parameters")
    rig = load_rig(args.rig)
    rig = rig.with_specs([cfg.sensor_spec(s) for s in rig.specs])
    model, template = _model_for_params(gt, cfg)
    res = run_baseline(gt, template, model.scene(gt), rig, args.mode)
    result = {"mode": res.mode, "n_points": res.n_points, "add": res.add}
    if res.pose is not None:
        result.update(rotation_matrix=res.pose.rotation, translation=res.pose.translation)
    write_json(out / "baseline.json", result)
    _manifest(out, "baseline", cfg, [args.gt, args.rig], template)
    print(f"{args.mode}: {res.n_points} points, ADD {res.add:.6g} m")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    model, template = _kind_model(args.kind, cfg)
    dcfg = DatasetConfig(kind=args.kind, n_sensors=args.n_sensors, spec=cfg.sensor_spec(),
                         workspace=cfg.workspace_config(), position_noise=0.0)
    rows, ok = [], True
    for i in range(args.n_scenes):
        sample = generate_sample(template, dcfg, cfg.seed, i)
        rep = gradient_check(sample.params, model, sample.rig)
        ok &= rep.passed
        for name, rel, ab in zip(rep.names, rep.column_rel_error, rep.column_abs_error):
            rows.append({"scene": i, "parameter": name, "rel_error": float(rel), "abs_error": float(ab)})
    save_table(out / "gradcheck.csv", rows)
    _manifest(out, "gradcheck", cfg, [], template, kind=args.kind, n_scenes=args.n_scenes)
    worst = max(r["rel_error"] for r in rows)
    print(f"max relative FD discrepancy {worst:.3e} over {args.n_scenes} scene(s): {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_viewsweep(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    template = _template(cfg)
    vcfg = ViewSweepConfig(budgets=tuple(args.budgets), n_scenes=args.n_scenes, spec=cfg.sensor_spec(),
                           workspace=cfg.workspace_config(), position_noise=args.position_noise,
                           poisson=args.poisson, init=cfg.init_config(), refine=cfg.refine_config(),
                           baseline=not args.no_baseline)
    rows, summary = run_viewsweep(template, vcfg, cfg.seed, resolve_jobs(args.jobs))
    save_table(out / "viewsweep_runs.csv", rows)
    save_table(out / "viewsweep_summary.csv", summary)
    _manifest(out, "viewsweep", cfg, [], template, sweep={"budgets": list(vcfg.budgets), "n_scenes": vcfg.n_scenes,
                                                          "position_noise": vcfg.position_noise,
                                                          "poisson": vcfg.poisson})
    for s in summary:
        print(f"{s['n_views']:4d} views: median ADD {s['median_add'] * 1000:.2f} mm, AUC {s['auc_add']:.2f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    template = _template(cfg)
    variants = args.variant or [v for v in ABLATION_VARIANTS if v != "full"]
    if args.pipeline:
        acfg = AblationConfig(variants=tuple(["full", *[v for v in variants if v != "full"]]),
                              n_scenes=args.n_scenes, n_sensors=args.n_sensors, spec=cfg.sensor_spec(),
                              workspace=cfg.workspace_config(), init=cfg.init_config(), refine=cfg.refine_config())
        rows, summary = run_ablation(template, acfg, cfg.seed, resolve_jobs(args.jobs))
        save_table(out / "ablation_runs.csv", rows)
        save_table(out / "ablation_summary.csv", summary)
        for s in summary:
            print(f"{s['variant']:>15s}: median ADD {s['median_add'] * 1000:.2f} mm, AUC {s['auc_add']:.2f}")
    else:
        scene = pose_scene(template, cfg.seed, 0, args.n_sensors, cfg.sensor_spec(), cfg.workspace_config())
        model, _ = _kind_model("posed_mesh", cfg)
        result = {}
        for v in variants:
            full, alt = ablation_histograms(model.scene(scene.gt), scene.rig, v)
            save_histograms(out / f"hist_{v}.csv", alt, [ablated_spec(s, v) for s in scene.rig.specs])
            result[v] = {"l1_difference": float(np.abs(full - alt).sum()), "total_counts_full": float(full.sum())}
            print(f"{v}: L1 difference {result[v]['l1_difference']:.6g} of {full.sum():.6g} counts")
        save_histograms(out / "hist_full.csv", full, scene.rig.specs)
        save_params(out / "params.json", scene.gt)
        save_rig(out / "rig.json", scene.rig)
        write_json(out / "ablation.json", result)
    _manifest(out, "ablate", cfg, [], template, variants=list(variants), pipeline=args.pipeline)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override its fields")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (default 0)")
    common.add_argument("--jobs", type=int, default=None,
                        help=f"worker processes (default: ${JOBS_ENV} or 1; <= 0 means all cores)")
    common.add_argument("--mesh", help="object mesh (OBJ); default is the built-in asymmetric test mesh")
    common.add_argument("--mesh-scale", type=float, help="uniform scale applied on load, e.g. 0.001 for mm")
    for section in ("sensor", "refine", "init", "calibrate", "workspace"):
        common.add_argument(f"--{section}", type=_key_value, action="append", metavar="KEY=VALUE",
                            help=f"override one {section} field (repeatable)")

    p = argparse.ArgumentParser(prog="diffuse-tof", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render", parents=[common], help="render histograms of a scene")
    s.add_argument("--params", required=True, help="scene parameters JSON")
    s.add_argument("--rig", help="rig JSON (default: sample one from --seed)")
    s.add_argument("--n-sensors", type=int, default=15)
    s.add_argument("--poisson", action="store_true", help="draw Poisson counts")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("datagen", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--n", type=int, required=True, help="number of samples")
    s.add_argument("--kind", choices=("posed_mesh", "sphere"), default="posed_mesh")
    s.add_argument("--n-sensors", type=int, default=15)
    s.add_argument("--position-noise", type=float, default=0.015, help="sensor position noise (m)")
    s.add_argument("--poisson", action="store_true")
    s.set_defaults(func=cmd_datagen)

    for name, fn, helptext in (("initialize", cmd_initialize, "multi-start initialization"),
                               ("refine", cmd_refine, "refine parameters from an initialization"),
                               ("calibrate", cmd_calibrate, "calibrate kernel scale, bin width and offset")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--rig", required=True, help="rig JSON")
        s.add_argument("--hist", required=True, help="histogram CSV")
        if name == "initialize":
            s.add_argument("--kind", choices=("posed_mesh", "sphere"), default="posed_mesh")
        if name == "refine":
            s.add_argument("--init-params", required=True, help="initial parameters JSON (e.g. from initialize)")
        s.set_defaults(func=fn)

    s = sub.add_parser("eval", parents=[common], help="ADD / ADD-S / AUC of predictions")
    s.add_argument("--pred", required=True, help="params JSON or a directory searched for params.json")
    s.add_argument("--gt", required=True, help="params JSON or a directory searched for params.json")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("baseline", parents=[common], help="point cloud + ICP baseline initialized at ground truth")
    s.add_argument("--gt", required=True, help="ground-truth params JSON")
    s.add_argument("--rig", required=True)
    s.add_argument("--mode", choices=("single_pixel", "grid16"), default="single_pixel")
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference Jacobian")
    s.add_argument("--kind", choices=("posed_mesh", "sphere"), default="posed_mesh")
    s.add_argument("--n-scenes", type=int, default=1)
    s.add_argument("--n-sensors", type=int, default=3)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("viewsweep", parents=[common], help="pose accuracy against the number of views")
    s.add_argument("--budgets", type=int, nargs="+", default=list(VIEW_BUDGETS))
    s.add_argument("--n-scenes", type=int, default=10)
    s.add_argument("--position-noise", type=float, default=0.0, help="sensor position noise (m)")
    s.add_argument("--poisson", action=argparse.BooleanOptionalAction, default=True,
                   help="Poisson photon noise on the observations (default on)")
    s.add_argument("--no-baseline", action="store_true", help="skip the single-pixel ICP baseline")
    s.set_defaults(func=cmd_viewsweep)

    s = sub.add_parser("ablate", parents=[common], help="sensor-model ablation variants")
    s.add_argument("--variant", action="append", choices=ABLATION_VARIANTS)
    s.add_argument("--pipeline", action="store_true", help="run pose recovery under each variant")
    s.add_argument("--n-scenes", type=int, default=10)
    s.add_argument("--n-sensors", type=int, default=15)
    s.set_defaults(func=cmd_ablate)
    return p


def _trace_file(args, exc: DivergenceError) -> Path | None:
    out = getattr(args, "out", None)
    if not out:
        return None
    path = Path(out) / "diverged_trace.csv"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_trace(path, exc.trace)
    except OSError:
        return None
    return path


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, InvalidParameterError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        path = _trace_file(args, e)
        print(f"numerical failure: {e}" + (f"; loss trace written to {path}" if path else ""), file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
