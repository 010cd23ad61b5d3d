"""Concurrent morphology/behavior co-design toolkit for multi-robot task allocation.

The library decomposes the co-design problem into four stages:

1. ``pareto``     -- multi-objective search over the morphology box for the
                     best trade-off capability ("talent") vectors,
2. ``boundary``   -- a parametric model of the talent Pareto surface plus
                     conditional quantile bounds, used to decode network
                     outputs into always-feasible talents,
3. ``training``   -- talent-infused actor-critic learning on the event-driven
                     MRTA-Flood simulator (``sim``), and
4. ``finalize``   -- recovery of a concrete morphology that realizes the
                     learned talents via constrained particle-swarm search.

``morphology`` holds the design-space definition and the physics surrogate,
``networks``/``autodiff`` the differentiable policy/value architectures, and
``pipeline``/``cli`` the end-to-end orchestration.
"""

from codesign.boundary import TalentBoundaryModel, decode_talents, fit_surface
from codesign.morphology import (
    MorphologyBounds,
    MorphologyVector,
    TalentVector,
    evaluate_talents,
    geometric_constraints,
    random_morphology,
)
from codesign.pareto import GaConfig, ParetoArchive, multi_run_pareto, non_dominated_sort
from codesign.pipeline import PipelineConfig, desk_config, full_scale_config, run_pipeline
from codesign.sim import EnvConfig, generate_scenario
from codesign.training import TrainConfig, evaluate, train

__all__ = [
    "MorphologyVector",
    "TalentVector",
    "MorphologyBounds",
    "evaluate_talents",
    "geometric_constraints",
    "random_morphology",
    "GaConfig",
    "ParetoArchive",
    "multi_run_pareto",
    "non_dominated_sort",
    "TalentBoundaryModel",
    "fit_surface",
    "decode_talents",
    "EnvConfig",
    "generate_scenario",
    "TrainConfig",
    "train",
    "evaluate",
    "PipelineConfig",
    "desk_config",
    "full_scale_config",
    "run_pipeline",
]

__version__ = "0.1.0"
