"""Experiment configuration: one JSON file, overridden field by field from the command line."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .datagen import Workspace
from .exceptions import ConfigurationError, InvalidParameterError
from .formats import dumps
from .optimize import CalibConfig, InitConfig, RefineConfig
from .render import SensorSpec

EXPERIMENT_KINDS = ("pose", "sphere", "viewsweep", "ablation")
SECTIONS = ("sensor", "refine", "init", "calibrate", "workspace")
MAX_SEED = 2**64 - 1


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


@dataclass
class ExperimentConfig:
    """Paths, per-module overrides and the seed of one run.

    Section dicts hold only the fields that differ from the library
    defaults; :meth:`sensor_spec`, :meth:`refine_config` and friends build
    the validated objects.
    """

    kind: str = "pose"
    seed: int = 0
    mesh: str | None = None
    mesh_scale: float = 1.0
    rig: str | None = None
    dataset: str | None = None
    output: str | None = None
    sensor: dict = field(default_factory=dict)
    refine: dict = field(default_factory=dict)
    init: dict = field(default_factory=dict)
    calibrate: dict = field(default_factory=dict)
    workspace: dict = field(default_factory=dict)
    source: str = "<flags>"  # where the values came from, for diagnostics

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"{self.source}: field 'kind' must be one of {EXPERIMENT_KINDS}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= MAX_SEED:
            raise ConfigurationError(f"{self.source}: field 'seed' must be an unsigned 64-bit integer")
        for name in SECTIONS:
            if not isinstance(getattr(self, name), dict):
                raise ConfigurationError(f"{self.source}: field '{name}' must be an object")

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        path = Path(path)
        text = path.read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}:1: top level must be an object")
        names = {f.name for f in dataclasses.fields(cls)} - {"source"}
        for key in data:
            if key not in names:
                line = _line_of(text, key)
                raise ConfigurationError(f"{path}:{line or 1}: unknown field '{key}'")
        cfg = cls(**data, source=str(path))
        try:
            cfg.validate()
        except ConfigurationError as e:
            msg = str(e)
            key = msg.split("'")[1] if "'" in msg else ""
            line = _line_of(text, key) if key else None
            raise ConfigurationError(f"{path}:{line or 1}: {msg.split(': ', 1)[-1]}") from e
        return cfg

    def override(self, **flags) -> ExperimentConfig:
        """Copy with every non-``None`` flag applied; dotted keys set one section field."""
        cfg = dataclasses.replace(self, **{k: dict(getattr(self, k)) for k in SECTIONS})
        for key, value in flags.items():
            if value is None:
                continue
            if "." in key:
                section, name = key.split(".", 1)
                getattr(cfg, section)[name] = value
            else:
                setattr(cfg, key, value)
        cfg.__post_init__()
        return cfg

    # -- typed views ------------------------------------------------------------

    def _build(self, section: str, factory, values: dict | None = None, **extra):
        values = _tuplify(getattr(self, section) if values is None else values)
        names = {f.name for f in dataclasses.fields(factory)} - set(extra)
        for key in values:
            if key not in names:
                raise ConfigurationError(f"{self.source}: unknown field '{key}' in section '{section}'")
        try:
            return factory(**values, **extra)
        except (TypeError, InvalidParameterError) as e:
            raise ConfigurationError(f"{self.source}: section '{section}': {e}") from e

    def sensor_overrides(self) -> dict:
        self._build("sensor", SensorSpec)
        return _tuplify(self.sensor)

    def sensor_spec(self, base: SensorSpec | None = None) -> SensorSpec:
        base = SensorSpec() if base is None else base
        try:
            return base.replace(**self.sensor_overrides())
        except InvalidParameterError as e:
            raise ConfigurationError(f"{self.source}: section 'sensor': {e}") from e

    def workspace_config(self) -> Workspace:
        return self._build("workspace", Workspace)

    def refine_config(self) -> RefineConfig:
        return self._build("refine", RefineConfig)

    def init_config(self) -> InitConfig:
        values = {"seed": self.seed, **self.init}
        return self._build("init", InitConfig, values, workspace=self.workspace_config())

    def calib_config(self) -> CalibConfig:
        return self._build("calibrate", CalibConfig)

    def validate(self) -> None:
        self.sensor_overrides()
        self.workspace_config()
        self.refine_config()
        self.init_config()
        self.calib_config()

    def to_dict(self) -> dict:
        """Resolved settings (paths excluded so that runs in different folders hash alike)."""
        return {
            "kind": self.kind,
            "seed": self.seed,
            "mesh_scale": self.mesh_scale,
            "sensor": self.sensor_spec().to_dict(),
            "refine": dataclasses.asdict(self.refine_config()),
            "init": {k: v for k, v in dataclasses.asdict(self.init_config()).items() if k != "workspace"},
            "calibrate": dataclasses.asdict(self.calib_config()),
            "workspace": dataclasses.asdict(self.workspace_config()),
        }

    def digest(self) -> str:
        return hashlib.sha256(dumps(self.to_dict()).encode()).hexdigest()
