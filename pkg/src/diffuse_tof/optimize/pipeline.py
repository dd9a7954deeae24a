"""Initialization followed by full refinement."""

from __future__ import annotations

from dataclasses import dataclass

from ..grad import ParametricModel
from ..render import Rig, prepare_rays
from .initialize import InitConfig, InitResult, initialize
from .refine import RefineConfig, RefineResult, refine


@dataclass(frozen=True, eq=False)
class Estimate:
    init: InitResult
    refined: RefineResult

    @property
    def params(self):
        return self.refined.params


def estimate_scene(observed, model: ParametricModel, rig: Rig, init_cfg: InitConfig | None = None,
                   refine_cfg: RefineConfig | None = None, jobs: int | None = 1) -> Estimate:
    """Multi-start initialization, then ``refine_cfg.steps`` of refinement from its winner."""
    refine_cfg = RefineConfig() if refine_cfg is None else refine_cfg
    ini = initialize(observed, model, rig, init_cfg, refine_cfg, jobs)
    return Estimate(ini, refine(ini.params, observed, model, rig, refine_cfg, prepare_rays(rig)))
