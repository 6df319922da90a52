"""Search behaviour: node selection, tie-breaks, execution judging."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affplan.backends import OracleBackend
from affplan.errors import FormatError
from affplan.planner import (PlanResult, SearchNode, best_node, execute_plan,
                             load_plan, node_chain, plan, plan_to_dict,
                             save_plan)
from affplan.raster import (NEGATIVE, POSITIVE, GoalSpec, RasterState,
                            goal_loss)
from affplan.affordance import ParametrizedAffordance
from affplan.tasks import build_task
from affplan.world import ObjectInstance, WorldState, render, validate_world


def _scene(*objects):
    w = WorldState(objects=tuple(objects), held=None, seed=0)
    validate_world(w)
    return w


def random_tree(rng, n_nodes):
    """A synthetic planning tree: random parents, quantized losses for ties."""
    nodes = [SearchNode(0, None, None, 0, float(rng.integers(20)) / 16.0,
                        (0, 0), None, None)]
    for i in range(1, n_nodes):
        parent = int(rng.integers(i))
        nodes.append(SearchNode(
            i, parent, None, nodes[parent].depth + 1,
            float(rng.integers(20)) / 16.0, (0, 0), None, None))
    return nodes


class TestSelection:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_argmin_argmax_duality(self, seed):
        # flipping every loss sign must swap which node the two polarities
        # pick, path and all
        rng = np.random.default_rng(seed)
        nodes = random_tree(rng, int(rng.integers(1, 200)))
        flipped = [SearchNode(n.id, n.parent, None, n.depth, -n.loss,
                              (0, 0), None, None) for n in nodes]
        neg = best_node(nodes, NEGATIVE)
        pos_of_flipped = best_node(flipped, POSITIVE)
        assert neg.id == pos_of_flipped.id
        path_a = [n.id for n in node_chain(nodes, neg)]
        path_b = [n.id for n in node_chain(flipped, pos_of_flipped)]
        assert path_a == path_b

    def test_positive_picks_lowest_loss(self):
        rng = np.random.default_rng(0)
        nodes = random_tree(rng, 50)
        chosen = best_node(nodes, POSITIVE)
        assert chosen.loss == min(n.loss for n in nodes)

    def test_negative_picks_highest_loss(self):
        rng = np.random.default_rng(1)
        nodes = random_tree(rng, 50)
        chosen = best_node(nodes, NEGATIVE)
        assert chosen.loss == max(n.loss for n in nodes)

    def test_ties_prefer_shallow_then_old(self):
        nodes = [SearchNode(0, None, None, 0, 0.5, (0, 0), None, None),
                 SearchNode(1, 0, None, 1, 0.25, (0, 0), None, None),
                 SearchNode(2, 0, None, 1, 0.25, (0, 0), None, None),
                 SearchNode(3, 1, None, 2, 0.25, (0, 0), None, None)]
        assert best_node(nodes, POSITIVE).id == 1
        nodes[0] = SearchNode(0, None, None, 0, 0.25, (0, 0), None, None)
        assert best_node(nodes, POSITIVE).id == 0


class TestPlan:
    def test_satisfied_goal_yields_empty_plan(self):
        world = _scene(ObjectInstance(0, "ball", 0.5, 0.5))
        root = render(world, 32)
        goal = GoalSpec(root.data[14:18, 14:18].copy(), POSITIVE)
        result = plan(root, goal, OracleBackend(world, 32), n_max=2)
        assert result.empty
        assert result.loss == 0.0
        assert result.depth == 0
        rep = execute_plan(world, result, goal)
        assert rep.success and rep.loss == 0.0

    def test_depth_never_exceeds_budget(self):
        task = build_task(1)
        root = render(task.world, 32)
        result = plan(root, task.goal, OracleBackend(task.world, 32), n_max=1)
        assert result.depth <= 1
        assert all(len(_actions_of(result, nid)) <= 1
                   for nid in range(result.n_nodes))

    def test_plan_is_deterministic(self):
        task = build_task(3)
        a = plan(render(task.world, 32), task.goal,
                 OracleBackend(task.world, 32), n_max=task.n_max)
        b = plan(render(task.world, 32), task.goal,
                 OracleBackend(task.world, 32), n_max=task.n_max)
        assert [x.__dict__ for x in a.actions] == [x.__dict__ for x in b.actions]
        assert a.loss == b.loss
        assert a.tree == b.tree

    def test_root_scored_without_expansion(self):
        world = _scene(ObjectInstance(0, "ball", 0.5, 0.5))
        root = render(world, 32)
        goal = GoalSpec(root.data[14:18, 14:18].copy(), POSITIVE)
        result = plan(root, goal, OracleBackend(world, 32), n_max=0)
        assert result.n_nodes == 1 and result.nodes_expanded == 0

    def test_negative_goal_seeks_the_worst_match(self):
        task = build_task(7)
        root = render(task.world, 32)
        result = plan(root, task.goal, OracleBackend(task.world, 32),
                      n_max=task.n_max)
        assert not result.empty
        root_loss, _, _ = goal_loss(task.goal, root)
        assert result.loss > root_loss


def _actions_of(result, nid):
    seen = []
    node = result.tree[nid]
    while node["parent"] is not None:
        seen.append(node["action"])
        node = result.tree[node["parent"]]
    return seen


class TestExecute:
    def test_failed_action_is_reported_by_index(self):
        world = _scene(ObjectInstance(0, "ball", 0.5, 0.5))
        goal = GoalSpec(render(world, 32).data[0:4, 0:4].copy(), POSITIVE)
        bogus = PlanResult(actions=[ParametrizedAffordance("grasp", 0.5, 0.5),
                                    ParametrizedAffordance("grasp", 0.2, 0.2)],
                           loss=0.0, offset=(0, 0), depth=2,
                           polarity=POSITIVE, n_nodes=1, nodes_expanded=0)
        rep = execute_plan(world, bogus, goal)
        assert not rep.success
        assert rep.failed_at == 1      # second grasp with a full gripper
        assert len(rep.worlds) == 2    # initial world plus the one good step

    def test_negative_threshold_direction(self):
        task = build_task(7)
        result, rep = _run_oracle(task)
        assert rep.polarity == NEGATIVE
        assert rep.threshold == 0.02
        assert rep.success and rep.loss >= rep.threshold


def _run_oracle(task):
    from affplan.tasks import run_task
    return run_task(task, "oracle")


class TestPlanFiles:
    def test_roundtrip(self, tmp_path):
        task = build_task(1)
        result, _ = _run_oracle(task)
        path = tmp_path / "plan.json"
        save_plan(result, path)
        back = load_plan(path)
        assert back["loss"] == result.loss
        assert [a.kind for a in back["actions"]] == \
            [a.kind for a in result.actions]
        assert back["actions"] == result.actions

    def test_unreadable_plan_rejected(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text("{broken")
        with pytest.raises(FormatError):
            load_plan(path)
        with pytest.raises(FormatError):
            load_plan(tmp_path / "missing.json")

    def test_plan_dict_is_json_clean(self):
        task = build_task(1)
        result, _ = _run_oracle(task)
        import json
        dumped = json.dumps(plan_to_dict(result), sort_keys=True)
        assert "grasp" in dumped
