"""Training data: random interaction sequences in the simulated tabletop.

A sequence starts from a random scene and applies uniformly chosen
executable actions, recording the render after every step.  Datasets are
saved as generation recipes (scene seed plus the chosen actions), not as
pixel tensors: the simulator is deterministic, so replaying a recipe
reproduces the exact float32 rasters while keeping artifacts tiny and
byte-stable across runs.

Augmentations produce world-consistent variants: small pixel translations
(the gripper strip stays put), exact horizontal mirroring, Gaussian jitter
on continuous action numbers, and a 180-degree angle relabel for targets
whose gripper angle is interchangeable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import config as C
from .affordance import (KINDS, TURN, TURN_DIRECTIONS, Detection,
                         ParametrizedAffordance, action_numerics,
                         parametrized_from_dict, to_json_dict)
from .errors import FormatError
from .world import WorldState, enumerate_affordances, random_scene, render, step

KIND_INDEX = {kind: i for i, kind in enumerate(KINDS)}

MANIFEST_NAME = "manifest.json"
DATASET_FORMAT = "affplan-recipe-1"


@dataclass
class Sequence:
    seed: int
    states: np.ndarray      # (L+1, R, R, 4) float32 renders, states[0] is input
    kinds: np.ndarray       # (L,) int64 indices into KINDS
    numerics: np.ndarray    # (L, 5) float32 raw action numbers
    symmetries: np.ndarray  # (L,) float32, > 0.5 when gripper angle is free
    actions: list[ParametrizedAffordance]

    @property
    def length(self) -> int:
        return len(self.actions)


def parametrize(dets: list[Detection]) -> list[ParametrizedAffordance]:
    """Executable variants of detections; turns split into both directions."""
    out = []
    for d in dets:
        if d.kind == TURN:
            for direction in TURN_DIRECTIONS:
                out.append(ParametrizedAffordance(d.kind, d.x, d.y, d.z, d.angle,
                                                  d.symmetry, d.confidence,
                                                  turn_direction=direction))
        else:
            out.append(ParametrizedAffordance(d.kind, d.x, d.y, d.z, d.angle,
                                              d.symmetry, d.confidence))
    return out


def replay(seed: int, actions: list[ParametrizedAffordance],
           resolution: int) -> Sequence:
    world = random_scene(seed)
    states = [render(world, resolution).data]
    for act in actions:
        world = step(world, act)
        states.append(render(world, resolution).data)
    return Sequence(
        seed=seed,
        states=np.stack(states),
        kinds=np.array([KIND_INDEX[a.kind] for a in actions], dtype=np.int64),
        numerics=np.stack([action_numerics(a) for a in actions]).astype(np.float32)
        if actions else np.zeros((0, 5), dtype=np.float32),
        symmetries=np.array([a.symmetry for a in actions], dtype=np.float32),
        actions=list(actions))


def generate_sequence(seed: int, resolution: int = 32,
                      max_steps: int = 4) -> Sequence:
    """Roll a random scene forward by uniformly chosen executable actions."""
    rng = np.random.default_rng(seed)
    world = random_scene(seed)
    actions: list[ParametrizedAffordance] = []
    for _ in range(max_steps):
        options = parametrize(enumerate_affordances(world))
        if not options:
            break
        act = options[int(rng.integers(len(options)))]
        world = step(world, act)
        actions.append(act)
    return replay(seed, actions, resolution)


def split_seeds(root_seed: int, index: int) -> int:
    """Stable per-sequence seed derived from the dataset seed."""
    return int(np.random.SeedSequence((root_seed, index)).generate_state(1)[0])


def build_dataset(root_seed: int = 0, n_train: int = 2000, n_val: int = 100,
                  n_test: int = 100, resolution: int = 32,
                  max_steps: int = 4) -> dict[str, list[Sequence]]:
    """Disjoint splits by index: test first, then val, then train."""
    total = n_test + n_val + n_train
    seqs = [generate_sequence(split_seeds(root_seed, i), resolution, max_steps)
            for i in range(total)]
    return {"test": seqs[:n_test],
            "val": seqs[n_test:n_test + n_val],
            "train": seqs[n_test + n_val:]}


def save_dataset(dirpath, splits: dict[str, list[Sequence]], root_seed: int,
                 resolution: int) -> None:
    os.makedirs(dirpath, exist_ok=True)
    manifest = {
        "format": DATASET_FORMAT,
        "root_seed": root_seed,
        "resolution": resolution,
        "splits": {},
    }
    for name in sorted(splits):
        seqs = splits[name]
        fname = f"{name}.jsonl"
        with open(os.path.join(dirpath, fname), "w") as f:
            for s in seqs:
                rec = {"seed": s.seed,
                       "actions": [to_json_dict(a) for a in s.actions]}
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        lengths: dict[str, int] = {}
        for s in seqs:
            lengths[str(s.length)] = lengths.get(str(s.length), 0) + 1
        manifest["splits"][name] = {"file": fname, "count": len(seqs),
                                    "lengths": lengths}
    with open(os.path.join(dirpath, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(dirpath, splits: tuple[str, ...] | None = None
                 ) -> dict[str, list[Sequence]]:
    """Replay recipe files back into full pixel sequences."""
    path = os.path.join(dirpath, MANIFEST_NAME)
    try:
        with open(path) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: cannot read dataset manifest: {e}") from e
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{path}: unknown dataset format "
                          f"{manifest.get('format')!r}")
    resolution = int(manifest["resolution"])
    out: dict[str, list[Sequence]] = {}
    for name, info in manifest["splits"].items():
        if splits is not None and name not in splits:
            continue
        seqs = []
        with open(os.path.join(dirpath, info["file"])) as f:
            for line in f:
                rec = json.loads(line)
                actions = [parametrized_from_dict(a) for a in rec["actions"]]
                seqs.append(replay(int(rec["seed"]), actions, resolution))
        if len(seqs) != info["count"]:
            raise FormatError(f"{info['file']}: expected {info['count']} "
                              f"sequences, found {len(seqs)}")
        out[name] = seqs
    return out


# --- train-time augmentation -------------------------------------------------

def _translate_body(states: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift world content under the fixed strip, padding with bare table."""
    if dx == 0 and dy == 0:
        return states
    out = np.empty_like(states)
    out[:, :, :, :3] = np.asarray(C.TABLE_COLOUR, dtype=states.dtype)
    out[:, :, :, 3] = 0.0
    body = states[:, C.STRIP_ROWS:]
    h, w = body.shape[1], body.shape[2]
    src_r = slice(max(0, -dy), min(h, h - dy))
    dst_r = slice(max(0, dy), min(h, h + dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[:, C.STRIP_ROWS:][:, dst_r, dst_c] = body[:, src_r, src_c]
    out[:, :C.STRIP_ROWS] = states[:, :C.STRIP_ROWS]
    return out


def augment_sample(states: np.ndarray, numerics: np.ndarray,
                   symmetries: np.ndarray, rng: np.random.Generator,
                   translate_px: int = 2, noise: float = 0.01):
    """Jittered copy of one sequence; states (L+1,R,R,4), numerics (L,5)."""
    states = states.copy()
    numerics = numerics.copy()
    res = states.shape[1]
    if translate_px > 0:
        dx = int(rng.integers(-translate_px, translate_px + 1))
        dy = int(rng.integers(-translate_px, translate_px + 1))
        states = _translate_body(states, dx, dy)
        numerics[:, 0] += dx / res
        numerics[:, 1] += dy / res
    if rng.random() < 0.5:
        states = states[:, :, ::-1].copy()
        numerics[:, 0] = 1.0 - numerics[:, 0]
        angle = (180.0 - numerics[:, 3] * 360.0) % 360.0
        numerics[:, 3] = angle / 360.0
        numerics[:, 4] = -numerics[:, 4]
    flip = (symmetries > 0.5) & (rng.random(len(symmetries)) < 0.5)
    numerics[flip, 3] = (numerics[flip, 3] * 360.0 + 180.0) % 360.0 / 360.0
    if noise > 0:
        numerics[:, :4] += rng.normal(0.0, noise, size=(len(numerics), 4)) \
            .astype(numerics.dtype)
    return states, numerics
