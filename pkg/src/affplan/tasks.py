"""Authored planning tasks with hand-placed scenes and goal patches.

Ten fixed tabletop problems exercise the planner end to end at 32x32:
multi-step stacking, unblocking by turning, counterweight ordering (two
mirrored tasks whose only valid rider orders are opposite), riders carried
by turns, tilt-shedding used constructively, and negative goals solved by
sweeping, launching, toppling, or covering the offending object.

Positive goals are RGBD crops rendered from an authored target world, so
a zero-loss match is achievable exactly.  Negative goals are small RGB
crops of the object that must stop being visible anywhere.

Scenes are authored for the default 32x32 raster; goal crops are pixel
regions of that raster.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import config as C
from .backends import NeuralBackend, OracleBackend
from .errors import ConfigurationError, FormatError
from .planner import ExecutionReport, PlanResult, execute_plan, plan
from .raster import (NEGATIVE, POSITIVE, RGB_CHANNELS, RGBD_CHANNELS,
                     GoalSpec, load_raster, save_raster)
from .world import (ObjectInstance, WorldState, load_scene, render,
                    save_scene, validate_world)

RESOLUTION = 32


@dataclass(frozen=True)
class Task:
    index: int
    name: str
    description: str
    world: WorldState
    goal: GoalSpec
    n_max: int


def _crop_goal(world: WorldState, rows: tuple[int, int], cols: tuple[int, int],
               polarity: str, channels) -> GoalSpec:
    img = render(world, RESOLUTION).data
    patch = img[rows[0]:rows[1], cols[0]:cols[1]]
    if 3 not in channels:
        patch = patch[:, :, :3]
    return GoalSpec(patch.copy(), polarity, tuple(channels))


def _world(*objects: ObjectInstance, seed: int = 0) -> WorldState:
    world = WorldState(objects=tuple(objects), held=None, seed=seed)
    validate_world(world)
    return world


def task01() -> Task:
    """Put the ball up on the platform."""
    world = _world(
        ObjectInstance(0, "support", 0.40, 0.55),
        ObjectInstance(1, "ball", 0.65, 0.40),
        ObjectInstance(2, "cup", 0.72, 0.62))
    target = _world(
        ObjectInstance(0, "support", 0.40, 0.55),
        ObjectInstance(1, "ball", 0.40, 0.55, height_level=1, on_slot=(0, 0)),
        ObjectInstance(2, "cup", 0.72, 0.62))
    goal = _crop_goal(target, (15, 21), (10, 16), POSITIVE, RGBD_CHANNELS)
    return Task(1, "raise-ball", "carry the ball onto the platform",
                world, goal, n_max=2)


def task02() -> Task:
    """The long block crowds the cup; turn it away, then shelve the cup."""
    world = _world(
        ObjectInstance(0, "block", 0.45, 0.50, orientation=0.0),
        ObjectInstance(1, "cup", 0.672, 0.50),
        ObjectInstance(2, "support", 0.28, 0.70))
    target = _world(
        ObjectInstance(0, "block", 0.45, 0.50, orientation=90.0),
        ObjectInstance(1, "cup", 0.28, 0.70, height_level=1, on_slot=(2, 0)),
        ObjectInstance(2, "support", 0.28, 0.70))
    goal = _crop_goal(target, (19, 25), (6, 12), POSITIVE, RGBD_CHANNELS)
    return Task(2, "unblock-then-shelve",
                "turn the long block aside so the cup can be picked up "
                "and shelved", world, goal, n_max=3)


def task03() -> Task:
    """Stack on the elevated block without tipping it off its pedestal."""
    world = _world(
        ObjectInstance(0, "support", 0.38, 0.52),
        ObjectInstance(1, "block", 0.43, 0.52, height_level=1, on_slot=(0, 0)),
        ObjectInstance(2, "cup", 0.65, 0.40),
        ObjectInstance(3, "support", 0.62, 0.70))
    target = _world(
        ObjectInstance(0, "support", 0.38, 0.52),
        ObjectInstance(1, "block", 0.43, 0.52, height_level=1, on_slot=(0, 0)),
        ObjectInstance(2, "cup", 0.33, 0.52, height_level=2, on_slot=(1, 0)),
        ObjectInstance(3, "support", 0.62, 0.70))
    goal = _crop_goal(target, (14, 20), (8, 14), POSITIVE, RGBD_CHANNELS)
    return Task(3, "balanced-stack",
                "set the cup on the raised block end that stays balanced",
                world, goal, n_max=2)


def _counterweight_world(support_x: float) -> tuple[WorldState, WorldState]:
    world = _world(
        ObjectInstance(0, "support", support_x, 0.55),
        ObjectInstance(1, "block", 0.50, 0.55, height_level=1, on_slot=(0, 0)),
        ObjectInstance(2, "ball", 0.32, 0.40),
        ObjectInstance(3, "cup", 0.68, 0.40))
    target = _world(
        ObjectInstance(0, "support", support_x, 0.55),
        ObjectInstance(1, "block", 0.50, 0.55, height_level=1, on_slot=(0, 0)),
        ObjectInstance(2, "ball", 0.40, 0.55, height_level=2, on_slot=(1, 0)),
        ObjectInstance(3, "cup", 0.60, 0.55, height_level=2, on_slot=(1, 2)))
    return world, target


def task04() -> Task:
    """Load both block ends; the overhang only balances ball-first."""
    world, target = _counterweight_world(0.46)
    goal = _crop_goal(target, (16, 20), (11, 21), POSITIVE, RGBD_CHANNELS)
    return Task(4, "counterweight-east",
                "load both ends of the overhanging block in a stable order",
                world, goal, n_max=4)


def task05() -> Task:
    """Mirrored overhang: the same goal now only balances cup-first."""
    world, target = _counterweight_world(0.54)
    goal = _crop_goal(target, (16, 20), (11, 21), POSITIVE, RGBD_CHANNELS)
    return Task(5, "counterweight-west",
                "load both ends of the overhanging block in a stable order",
                world, goal, n_max=4)


def task06() -> Task:
    """The goal spot is no slot at all until the block turns."""
    world = _world(
        ObjectInstance(0, "block", 0.50, 0.52, orientation=0.0),
        ObjectInstance(1, "cup", 0.50, 0.70))
    target = _world(
        ObjectInstance(0, "block", 0.50, 0.52, orientation=90.0),
        ObjectInstance(1, "cup", 0.50, 0.62, height_level=1, on_slot=(0, 2)))
    goal = _crop_goal(target, (18, 23), (14, 18), POSITIVE, RGBD_CHANNELS)
    return Task(6, "ride-the-turn",
                "park the cup on a spot that only exists after a quarter "
                "turn", world, goal, n_max=3)


def task07() -> Task:
    """The ball sits against the block near the table edge; sweep it off.

    Only the clockwise turn reaches the ball, and the resulting roll exits
    the reachable table, so the ball is gone rather than merely elsewhere.
    """
    world = _world(
        ObjectInstance(0, "block", 0.72, 0.25, orientation=0.0),
        ObjectInstance(1, "ball", 0.8889, 0.1525))
    goal = _crop_goal(world, (4, 6), (27, 30), NEGATIVE, RGB_CHANNELS)
    return Task(7, "sweep-clear",
                "knock the ungraspable ball off the table with a quarter "
                "turn", world, goal, n_max=2)


def task08() -> Task:
    """Overload the overhang so the ball launches off the table edge."""
    world = _world(
        ObjectInstance(0, "support", 0.62, 0.55),
        ObjectInstance(1, "block", 0.66, 0.55, height_level=1, on_slot=(0, 0)),
        ObjectInstance(2, "ball", 0.35, 0.68))
    goal = _crop_goal(world, (21, 23), (10, 12), NEGATIVE, RGB_CHANNELS)
    return Task(8, "tilt-launch",
                "get rid of the ball for good using the unstable overhang",
                world, goal, n_max=3)


def task09() -> Task:
    """Only lifting the cup's carrier makes the cup topple and go dark."""
    world = _world(
        ObjectInstance(0, "support", 0.35, 0.62),
        ObjectInstance(1, "block", 0.35, 0.62, height_level=1, on_slot=(0, 0)),
        ObjectInstance(2, "cup", 0.60, 0.40))
    goal = _crop_goal(world, (12, 14), (18, 20), NEGATIVE, RGB_CHANNELS)
    return Task(9, "fling-the-rider",
                "make the upright cup colour vanish; only a topple does it",
                world, goal, n_max=3)


def task10() -> Task:
    """The ball cannot be grasped next to the platform; bury it instead."""
    world = _world(
        ObjectInstance(0, "support", 0.44, 0.55),
        ObjectInstance(1, "ball", 0.535, 0.55),
        ObjectInstance(2, "block", 0.26, 0.72, orientation=0.0))
    goal = _crop_goal(world, (16, 18), (16, 18), NEGATIVE, RGB_CHANNELS)
    return Task(10, "cover-the-ball",
                "hide the unreachable ball under something bigger",
                world, goal, n_max=2)


_BUILDERS = {1: task01, 2: task02, 3: task03, 4: task04, 5: task05,
             6: task06, 7: task07, 8: task08, 9: task09, 10: task10}


def build_task(index: int) -> Task:
    if index not in _BUILDERS:
        raise ConfigurationError(f"no task {index}; tasks run 1..10")
    return _BUILDERS[index]()


def all_tasks() -> list[Task]:
    return [build_task(i) for i in sorted(_BUILDERS)]


def run_task(task: Task, backend_name: str = "oracle", params=None,
             net_cfg=None, tau_pos: float = C.TAU_POS,
             tau_neg: float = C.TAU_NEG) -> tuple[PlanResult, ExecutionReport]:
    """Plan for a task with the chosen backend and execute in the real world."""
    root = render(task.world, RESOLUTION)
    if backend_name == "oracle":
        backend = OracleBackend(task.world, RESOLUTION)
    elif backend_name == "neural":
        if params is None or net_cfg is None:
            raise ConfigurationError("the neural backend needs trained "
                                     "parameters and their config")
        backend = NeuralBackend(params, net_cfg)
    else:
        raise ConfigurationError(f"unknown backend {backend_name!r}")
    result = plan(root, task.goal, backend, n_max=task.n_max)
    report = execute_plan(task.world, result, task.goal, RESOLUTION,
                          tau_pos, tau_neg)
    return result, report


# --- fixture files -----------------------------------------------------------

def save_task(task: Task, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    save_scene(task.world, os.path.join(dirpath, "scene.json"))
    save_raster(task.goal.image, os.path.join(dirpath, "goal.rgbdf"))
    meta = {
        "index": task.index,
        "name": task.name,
        "description": task.description,
        "polarity": task.goal.polarity,
        "channels": list(task.goal.channels),
        "n_max": task.n_max,
        "resolution": RESOLUTION,
    }
    with open(os.path.join(dirpath, "task.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_task(dirpath) -> Task:
    try:
        with open(os.path.join(dirpath, "task.json")) as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{dirpath}: cannot read task meta: {e}") from e
    world = load_scene(os.path.join(dirpath, "scene.json"))
    goal_img = load_raster(os.path.join(dirpath, "goal.rgbdf"))
    goal = GoalSpec(goal_img, meta["polarity"], tuple(meta["channels"]))
    return Task(int(meta["index"]), meta["name"], meta["description"],
                world, goal, int(meta["n_max"]))
