"""Affordance records shared by the simulator, the detector, and the planner.

A Detection names an action opportunity at a 3-D commencement point with a
gripper angle.  The symmetry flag marks targets for which every gripper
angle is equivalent (balls, upright cups, slot placements).  Turning is the
only affordance that needs an extra parameter, the signed quarter-turn.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .config import HEIGHT_UNIT

GRASP = "grasp"
PLACE = "place"
TURN = "turn"
KINDS = (GRASP, PLACE, TURN)

TURN_DIRECTIONS = (90, -90)


@dataclass(frozen=True)
class Detection:
    kind: str
    x: float
    y: float
    z: float = 0.0
    angle: float = 0.0        # degrees in [0, 360)
    symmetry: float = 0.0     # > 0.5: gripper angle interchangeable
    confidence: float = 1.0

    def __post_init__(self):
        # object-class labels ("cup", "ball", ...) are valid detection kinds
        # too; only executable affordances are restricted to KINDS
        if not self.kind or not isinstance(self.kind, str):
            raise ValueError(f"bad detection kind {self.kind!r}")

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def distance_to(self, other: "Detection") -> float:
        return math.dist(self.position, other.position)


@dataclass(frozen=True)
class ParametrizedAffordance(Detection):
    """A detection made executable; turns carry their direction."""

    turn_direction: int | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.kind not in KINDS:
            raise ValueError(f"unknown affordance kind {self.kind!r}")
        if self.kind == TURN:
            if self.turn_direction not in TURN_DIRECTIONS:
                raise ValueError("turn affordances need turn_direction of +90 or -90")
        elif self.turn_direction is not None:
            raise ValueError(f"{self.kind} affordances carry no turn_direction")


def angle_difference(a: float, b: float, symmetric: bool) -> float:
    """Smallest angular error in degrees; gripper-symmetric targets fold at 180."""
    period = 180.0 if symmetric else 360.0
    d = abs(a - b) % period
    return min(d, period - d)


def action_numerics(action: Detection) -> np.ndarray:
    """Five raw numbers describing an action: x, y, and normalized height,
    gripper angle, and signed quarter-turn fraction."""
    turn = (getattr(action, "turn_direction", None) or 0) / 360.0
    return np.array([action.x, action.y, action.z / (4.0 * HEIGHT_UNIT),
                     action.angle / 360.0, turn], dtype=np.float64)


def to_json_dict(det: Detection) -> dict:
    d = asdict(det)
    if d.get("turn_direction", 0) is None:
        d.pop("turn_direction", None)
    return d


def detection_from_dict(d: dict) -> Detection:
    return Detection(kind=d["kind"], x=d["x"], y=d["y"], z=d.get("z", 0.0),
                     angle=d.get("angle", 0.0), symmetry=d.get("symmetry", 0.0),
                     confidence=d.get("confidence", 1.0))


def parametrized_from_dict(d: dict) -> ParametrizedAffordance:
    return ParametrizedAffordance(
        kind=d["kind"], x=d["x"], y=d["y"], z=d.get("z", 0.0),
        angle=d.get("angle", 0.0), symmetry=d.get("symmetry", 0.0),
        confidence=d.get("confidence", 1.0),
        turn_direction=d.get("turn_direction"))


def save_detections_jsonl(detections, path) -> None:
    with open(path, "w") as f:
        for det in detections:
            f.write(json.dumps(to_json_dict(det), sort_keys=True) + "\n")


def load_detections_jsonl(path) -> list[Detection]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(detection_from_dict(json.loads(line)))
    return out
