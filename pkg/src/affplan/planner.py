"""Tree search over imagined futures.

Starting from the current image, every gated action proposal found in a
predicted state spawns a child prediction, level by level, up to a depth
budget.  Each node's composed image is scored by the best sliding-window
match against the goal patch.  A positive goal wants that match as close
as possible somewhere; a negative goal wants even the best match to be a
bad one, so node selection flips from argmin to argmax of the same score.
Ties prefer shallower plans, then earlier-created nodes, which makes the
whole search deterministic.

The root itself is a candidate: a satisfied goal yields an empty plan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import config as C
from .affordance import (ParametrizedAffordance, parametrized_from_dict,
                         to_json_dict)
from .datagen import parametrize
from .detect import propose_affordances, recognise
from .errors import FormatError, PreconditionError
from .raster import NEGATIVE, POSITIVE, GoalSpec, RasterState, goal_loss
from .world import WorldState, render, step


@dataclass
class SearchNode:
    id: int
    parent: int | None
    action: ParametrizedAffordance | None
    depth: int
    loss: float
    offset: tuple[int, int]
    context: Any
    composed: np.ndarray


@dataclass
class PlanResult:
    actions: list[ParametrizedAffordance]
    loss: float
    offset: tuple[int, int]
    depth: int
    polarity: str
    n_nodes: int
    nodes_expanded: int
    frames: list[np.ndarray] = field(default_factory=list)
    tree: list[dict] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.actions


def _score_key(polarity: str):
    if polarity == POSITIVE:
        return lambda n: (n.loss, n.depth, n.id)
    return lambda n: (-n.loss, n.depth, n.id)


def best_node(nodes: list[SearchNode], polarity: str) -> SearchNode:
    """The winning node: lowest loss for positive goals, highest for
    negative, ties going to the shallowest then oldest node."""
    return min(nodes, key=_score_key(polarity))


def node_chain(nodes: list[SearchNode], node: SearchNode) -> list[SearchNode]:
    """Root-to-node path through the parent links."""
    chain: list[SearchNode] = []
    cursor: SearchNode | None = node
    while cursor is not None:
        chain.append(cursor)
        cursor = nodes[cursor.parent] if cursor.parent is not None else None
    chain.reverse()
    return chain


def plan(root_state: RasterState, goal: GoalSpec, backend, n_max: int = 4,
         cutoff: float = C.CONFIDENCE_CUTOFF, nms_dist: float = C.NMS_DIST,
         nms_angle: float = C.NMS_ANGLE, keep_tree: bool = True) -> PlanResult:
    """Search action chains of length at most n_max for the best goal score."""
    loss0, x0, y0 = goal_loss(goal, root_state)
    nodes = [SearchNode(0, None, None, 0, loss0, (x0, y0),
                        backend.root(root_state), root_state.data)]
    frontier = [0]
    nodes_expanded = 0
    for depth in range(1, n_max + 1):
        pairs: list[tuple[int, ParametrizedAffordance]] = []
        for nid in frontier:
            state = RasterState(nodes[nid].composed)
            proposals = propose_affordances(
                state, recognise(state, cutoff, nms_dist, nms_angle))
            nodes_expanded += 1
            for action in parametrize(proposals):
                pairs.append((nid, action))
        if not pairs:
            break
        contexts = [nodes[nid].context for nid, _ in pairs]
        composeds = np.stack([nodes[nid].composed for nid, _ in pairs])
        actions = [action for _, action in pairs]
        new_ctxs, _, new_comps, ok = backend.extend(contexts, composeds, actions)
        frontier = []
        for j, (nid, action) in enumerate(pairs):
            if not ok[j]:
                continue
            state = RasterState(new_comps[j])
            loss, bx, by = goal_loss(goal, state)
            node = SearchNode(len(nodes), nid, action, depth, loss, (bx, by),
                              new_ctxs[j], new_comps[j])
            nodes.append(node)
            frontier.append(node.id)
    best = best_node(nodes, goal.polarity)
    chain = node_chain(nodes, best)
    tree = []
    if keep_tree:
        tree = [{"id": n.id, "parent": n.parent, "depth": n.depth,
                 "loss": n.loss, "offset": list(n.offset),
                 "action": None if n.action is None else to_json_dict(n.action)}
                for n in nodes]
    return PlanResult(
        actions=[n.action for n in chain if n.action is not None],
        loss=best.loss, offset=best.offset, depth=best.depth,
        polarity=goal.polarity, n_nodes=len(nodes),
        nodes_expanded=nodes_expanded,
        frames=[n.composed for n in chain], tree=tree)


@dataclass
class ExecutionReport:
    success: bool
    loss: float
    offset: tuple[int, int]
    threshold: float
    polarity: str
    worlds: list[WorldState]
    final_render: RasterState
    failed_at: int | None = None


def execute_plan(world: WorldState, result: PlanResult, goal: GoalSpec,
                 resolution: int = 32, tau_pos: float = C.TAU_POS,
                 tau_neg: float = C.TAU_NEG) -> ExecutionReport:
    """Run a plan in the real world and judge the goal on the true render."""
    worlds = [world]
    for i, action in enumerate(result.actions):
        try:
            world = step(world, action)
        except PreconditionError:
            final = render(world, resolution)
            loss, x, y = goal_loss(goal, final)
            return ExecutionReport(False, loss, (x, y), tau_pos,
                                   goal.polarity, worlds, final, failed_at=i)
        worlds.append(world)
    final = render(world, resolution)
    loss, x, y = goal_loss(goal, final)
    if goal.polarity == POSITIVE:
        success, threshold = loss <= tau_pos, tau_pos
    else:
        success, threshold = loss >= tau_neg, tau_neg
    return ExecutionReport(success, loss, (x, y), threshold, goal.polarity,
                           worlds, final)


def plan_to_dict(result: PlanResult) -> dict:
    return {
        "actions": [to_json_dict(a) for a in result.actions],
        "loss": result.loss,
        "offset": list(result.offset),
        "depth": result.depth,
        "polarity": result.polarity,
        "n_nodes": result.n_nodes,
        "nodes_expanded": result.nodes_expanded,
    }


def save_plan(result: PlanResult, path) -> None:
    with open(path, "w") as f:
        json.dump(plan_to_dict(result), f, indent=2, sort_keys=True)
        f.write("\n")


def load_plan(path) -> dict:
    try:
        with open(path) as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: cannot read plan: {e}") from e
    d["actions"] = [parametrized_from_dict(a) for a in d.get("actions", [])]
    return d
