"""Tabletop manipulation planning on predicted future images.

The package simulates a small deterministic tabletop, renders it to RGBD
rasters, finds action opportunities in those rasters, predicts how each
action would change the image, and searches over imagined futures for an
action sequence that brings a goal patch about (or makes it impossible).
"""

from .affordance import Detection, ParametrizedAffordance
from .backends import NeuralBackend, OracleBackend, rollout_chain
from .config import NetConfig, RunConfig, TrainConfig
from .errors import (AffplanError, ConfigurationError, DimensionError,
                     FormatError, InvalidWorldError, PreconditionError)
from .planner import ExecutionReport, PlanResult, execute_plan, plan
from .raster import (DiffDescriptor, GoalSpec, RasterState, apply_diff,
                     goal_loss, make_diff)
from .tasks import Task, all_tasks, build_task, run_task
from .world import (ObjectInstance, WorldState, enumerate_affordances,
                    random_scene, render, step)

__version__ = "0.1.0"

__all__ = [
    "AffplanError", "ConfigurationError", "DimensionError", "FormatError",
    "InvalidWorldError", "PreconditionError",
    "NetConfig", "RunConfig", "TrainConfig",
    "Detection", "ParametrizedAffordance",
    "ObjectInstance", "WorldState", "enumerate_affordances", "random_scene",
    "render", "step",
    "RasterState", "DiffDescriptor", "GoalSpec", "apply_diff", "goal_loss",
    "make_diff",
    "OracleBackend", "NeuralBackend", "rollout_chain",
    "PlanResult", "ExecutionReport", "plan", "execute_plan",
    "Task", "all_tasks", "build_task", "run_task",
]
