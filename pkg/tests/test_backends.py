"""Backend contract: oracle exactness, neural plumbing, chain rollouts."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affplan.backends import NeuralBackend, OracleBackend, rollout_chain
from affplan.config import NetConfig
from affplan.datagen import generate_sequence, parametrize
from affplan.errors import ConfigurationError, PreconditionError
from affplan.net.model import init_params
from affplan.raster import RasterState, apply_diff
from affplan.affordance import ParametrizedAffordance
from affplan.world import enumerate_affordances, random_scene, render, step


class TestOracle:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 5000))
    def test_extend_equals_simulator_render(self, seed):
        world = random_scene(seed)
        root = render(world, 32)
        backend = OracleBackend(world, 32)
        ctx = backend.root(root)
        options = parametrize(enumerate_affordances(world))
        if not options:
            return
        ctxs, diffs, comps, ok = backend.extend(
            [ctx] * len(options), np.stack([root.data] * len(options)), options)
        assert ok.all()
        for i, act in enumerate(options):
            true = render(step(world, act), 32).data
            assert np.array_equal(comps[i], true)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 5000))
    def test_composing_diffs_reproduces_final_render(self, seed):
        # the chain of predicted differences must rebuild the very pixels
        # the simulator would render, with zero tolerance
        seq = generate_sequence(seed, 32, 4)
        if seq.length == 0:
            return
        world = random_scene(seed)
        backend = OracleBackend(world, 32)
        diffs, comps = rollout_chain(backend, RasterState(seq.states[0]),
                                     seq.actions)
        state = RasterState(seq.states[0])
        for diff, comp, truth in zip(diffs, comps, seq.states[1:]):
            state = apply_diff(state, diff)
            assert np.array_equal(state.data, truth)
            assert np.array_equal(comp.data, truth)

    def test_infeasible_action_flags_not_ok(self):
        world = random_scene(0)
        backend = OracleBackend(world, 32)
        root = render(world, 32)
        ctx = backend.root(root)
        bogus = ParametrizedAffordance("grasp", 0.12, 0.12)
        good = parametrize(enumerate_affordances(world))[0]
        ctxs, diffs, comps, ok = backend.extend(
            [ctx, ctx], np.stack([root.data, root.data]), [bogus, good])
        assert not ok[0] and ok[1]
        assert ctxs[0] is None
        assert np.all(diffs[0] == 0.0)

    def test_requires_root_world(self):
        with pytest.raises(ConfigurationError):
            OracleBackend(None)


class TestNeural:
    def setup_method(self):
        self.cfg = NetConfig()
        self.params = init_params(self.cfg, seed=0)

    def test_extend_shapes_and_always_ok(self):
        world = random_scene(1)
        root = render(world, 32)
        backend = NeuralBackend(self.params, self.cfg)
        ctx = backend.root(root)
        acts = [ParametrizedAffordance("grasp", 0.4, 0.4),
                ParametrizedAffordance("turn", 0.6, 0.5, turn_direction=90)]
        ctxs, diffs, comps, ok = backend.extend(
            [ctx, ctx], np.stack([root.data, root.data]), acts)
        assert ok.all()
        assert diffs.shape == (2, 32, 32, 5)
        assert comps.shape == (2, 32, 32, 4)
        assert len(ctxs) == 2 and len(ctxs[0]) == 2

    def test_deterministic(self):
        world = random_scene(2)
        root = render(world, 32)
        backend = NeuralBackend(self.params, self.cfg)
        act = ParametrizedAffordance("place", 0.5, 0.5, z=0.06)
        outs = []
        for _ in range(2):
            ctx = backend.root(root)
            _, diffs, comps, _ = backend.extend([ctx], root.data[None], [act])
            outs.append((diffs.copy(), comps.copy()))
        assert np.array_equal(outs[0][0], outs[1][0])
        assert np.array_equal(outs[0][1], outs[1][1])

    def test_root_is_encoded_once_then_chained(self):
        # chaining through extend must equal the training-time rollout
        from affplan.net.model import predict_sequence
        world = random_scene(3)
        root = render(world, 32)
        acts = [ParametrizedAffordance("grasp", 0.4, 0.4),
                ParametrizedAffordance("place", 0.6, 0.6, z=0.06)]
        backend = NeuralBackend(self.params, self.cfg)
        _, comps = rollout_chain(backend, root, acts)
        from affplan.affordance import action_numerics
        kinds = [self.cfg.kinds.index(a.kind) for a in acts]
        numerics = np.stack([action_numerics(a) for a in acts])
        ref_comps, _ = predict_sequence(self.params, self.cfg,
                                        root.data.astype(np.float32),
                                        kinds, numerics)
        for got, ref in zip(comps, ref_comps):
            assert np.allclose(got.data, ref, atol=1e-6)


class TestChain:
    def test_break_raises_with_position(self):
        world = random_scene(0)
        backend = OracleBackend(world, 32)
        root = render(world, 32)
        with pytest.raises(PreconditionError):
            rollout_chain(backend, root,
                          [ParametrizedAffordance("grasp", 0.12, 0.12)])

    def test_empty_chain(self):
        world = random_scene(4)
        backend = OracleBackend(world, 32)
        diffs, comps = rollout_chain(backend, render(world, 32), [])
        assert diffs == [] and comps == []
