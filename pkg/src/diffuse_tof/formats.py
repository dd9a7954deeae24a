"""On-disk formats: rig JSON, histogram CSV with a spec sidecar, parameter JSON.

All writers are deterministic (sorted keys, round-trippable float repr) so
that identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import ConfigurationError, InvalidParameterError
from .grad.params import SceneParams, params_from_dict
from .render import Rig, SensorPose, SensorSpec

HIST_HEADER = ("sensor_id", "bin_index", "count")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- rigs --------------------------------------------------------------------

def _specs_to_dict(specs) -> dict:
    if all(s == specs[0] for s in specs):
        return {"spec": specs[0].to_dict()}
    return {"specs": [s.to_dict() for s in specs]}


def _specs_from_dict(data: dict, n: int, where: str) -> list[SensorSpec]:
    try:
        if "specs" in data:
            specs = [SensorSpec.from_dict(d) for d in data["specs"]]
            if len(specs) != n:
                raise ConfigurationError(f"{where}: {len(specs)} specs for {n} sensors")
            return specs
        return [SensorSpec.from_dict(data.get("spec", {}))] * n
    except (TypeError, InvalidParameterError) as e:
        raise ConfigurationError(f"{where}: bad sensor spec ({e})") from e


def rig_to_dict(rig: Rig) -> dict:
    sensors = [{"position": p.position.tolist(), "matrix": p.orientation.tolist()} for p in rig.poses]
    return {"sensors": sensors, **_specs_to_dict(rig.specs)}


def _pose_from_dict(entry: dict, where: str) -> SensorPose:
    if "position" not in entry:
        raise ConfigurationError(f"{where}: missing 'position'")
    if "matrix" in entry:
        rot = np.asarray(entry["matrix"], dtype=float)
    elif "quaternion_xyzw" in entry:
        rot = Rotation.from_quat(entry["quaternion_xyzw"]).as_matrix()
    else:
        raise ConfigurationError(f"{where}: orientation needs 'matrix' or 'quaternion_xyzw'")
    try:
        return SensorPose(entry["position"], rot)
    except (ValueError, InvalidParameterError) as e:
        raise ConfigurationError(f"{where}: {e}") from e


def rig_from_dict(data: dict, where: str = "rig") -> Rig:
    if "sensors" not in data or not isinstance(data["sensors"], list):
        raise ConfigurationError(f"{where}: missing 'sensors' list")
    poses = [_pose_from_dict(s, f"{where}: sensors[{i}]") for i, s in enumerate(data["sensors"])]
    return Rig(poses, _specs_from_dict(data, len(poses), where))


def save_rig(path, rig: Rig, **extra) -> Path:
    return write_json(path, {**rig_to_dict(rig), **extra})


def load_rig(path) -> Rig:
    return rig_from_dict(read_json(path), str(path))


# -- histograms ----------------------------------------------------------------

def sidecar_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".spec.json")


def save_histograms(path, counts, specs) -> Path:
    """Write ``(S, B)`` counts as long-format CSV plus a JSON sidecar of the specs."""
    path = Path(path)
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    specs = [specs] * len(counts) if isinstance(specs, SensorSpec) else list(specs)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HIST_HEADER)
        for s, row in enumerate(counts):
            for i, v in enumerate(row):
                w.writerow((s, i, repr(float(v))))
    write_json(sidecar_path(path), _specs_to_dict(specs))
    return path


def load_histograms(path) -> tuple[np.ndarray, list[SensorSpec]]:
    """Read counts ``(S, B)`` and the per-sensor specs from the sidecar (defaults if absent)."""
    path = Path(path)
    rows = []
    with path.open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HIST_HEADER:
            raise ConfigurationError(f"{path}:1: expected header {','.join(HIST_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s, i, v = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError) as e:
                raise ConfigurationError(f"{path}:{line}: malformed row {row!r}") from e
            if s < 0 or i < 0:
                raise ConfigurationError(f"{path}:{line}: negative index")
            rows.append((s, i, v))
    if not rows:
        raise ConfigurationError(f"{path}: no histogram rows")
    arr = np.array(rows)
    n_s, n_b = int(arr[:, 0].max()) + 1, int(arr[:, 1].max()) + 1
    counts = np.full((n_s, n_b), np.nan)
    counts[arr[:, 0].astype(int), arr[:, 1].astype(int)] = arr[:, 2]
    if np.isnan(counts).any():
        raise ConfigurationError(f"{path}: missing (sensor_id, bin_index) entries")
    side = sidecar_path(path)
    data = read_json(side) if side.exists() else {}
    return counts, _specs_from_dict(data, n_s, str(side))


# -- parameters ----------------------------------------------------------------

def save_params(path, params: SceneParams, **extra) -> Path:
    return write_json(path, {**params.to_dict(), **extra})


def load_params(path) -> SceneParams:
    data = read_json(path)
    try:
        return params_from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"{path}: bad parameters ({e})") from e


def save_trace(path, trace) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("step", "loss"))
        for i, v in enumerate(trace):
            w.writerow((i, repr(float(v))))
    return path


def save_table(path, rows, columns=None) -> Path:
    """Write a list of dicts as CSV; floats use ``repr`` so values round-trip."""
    path = Path(path)
    rows = list(rows)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in (r.get(c) for c in columns)])
    return path
