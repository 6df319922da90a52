"""Interchangeable future-image predictors for the planner.

Both backends expose the same contract: `root` turns the root image into
an opaque per-node context, `extend` advances a batch of (context, image)
pairs by one action each and returns new contexts, the predicted
difference images, and the composed next states.  The planner never
learns which backend it talks to.

The oracle backend steps the simulator and renders, so its differences
are exact and composing them reproduces the true render bit for bit.
The neural backend rolls the learned forward model: the root image is
encoded once, every further step is a latent-space update, and composed
predictions are built by blending decoded diffs, never by re-encoding.
"""

from __future__ import annotations

import numpy as np

from .affordance import KINDS, ParametrizedAffordance, action_numerics
from .config import NetConfig
from .errors import ConfigurationError, PreconditionError
from .net.model import decode, encode, extend as net_extend
from .raster import DiffDescriptor, RasterState, apply_diff, make_diff
from .world import WorldState, render, step


class OracleBackend:
    """Ground-truth predictions from the simulator itself."""

    def __init__(self, root_world: WorldState, resolution: int = 32):
        if root_world is None:
            raise ConfigurationError("the oracle backend needs the root world")
        self.root_world = root_world
        self.resolution = resolution

    def root(self, root_state: RasterState):
        return self.root_world

    def extend(self, contexts, composeds, actions):
        n = len(actions)
        new_contexts = [None] * n
        ok = np.zeros(n, dtype=bool)
        diffs = np.zeros((n, self.resolution, self.resolution, 5),
                         dtype=np.float32)
        new_comps = np.zeros((n, self.resolution, self.resolution, 4),
                             dtype=np.float32)
        for i, (world, action) in enumerate(zip(contexts, actions)):
            try:
                nxt = step(world, action)
            except PreconditionError:
                continue
            prev = RasterState(composeds[i])
            diff = make_diff(prev, render(nxt, self.resolution))
            composed = apply_diff(prev, diff)
            new_contexts[i] = nxt
            diffs[i] = diff.data
            new_comps[i] = composed.data
            ok[i] = True
        return new_contexts, diffs, new_comps, ok


class NeuralBackend:
    """Predictions from the trained forward model, root encoded only once."""

    def __init__(self, params: dict[str, np.ndarray], cfg: NetConfig):
        self.params = params
        self.cfg = cfg

    def root(self, root_state: RasterState):
        latent, _ = encode(self.params, self.cfg,
                           root_state.data[None].astype(np.float32))
        mem = np.zeros(self.cfg.memory, dtype=np.float32)
        return (latent[0], mem)

    def extend(self, contexts, composeds, actions):
        n = len(actions)
        latents = np.stack([c[0] for c in contexts])
        mems = np.stack([c[1] for c in contexts])
        comps = np.asarray(composeds, dtype=np.float32)
        kinds = np.array([KINDS.index(a.kind) for a in actions], dtype=np.int64)
        numerics = np.stack([action_numerics(a) for a in actions])
        latents2, mems2, comps2, diffs = net_extend(
            self.params, self.cfg, latents, mems, comps, kinds, numerics)
        new_contexts = [(latents2[i], mems2[i]) for i in range(n)]
        return new_contexts, diffs, comps2, np.ones(n, dtype=bool)


def rollout_chain(backend, root_state: RasterState,
                  actions: list[ParametrizedAffordance]):
    """Predict a single action chain; returns (diffs, composed states)."""
    ctx = backend.root(root_state)
    composed = root_state.data
    diffs, comps = [], []
    for action in actions:
        new_ctxs, dif, new_comps, ok = backend.extend(
            [ctx], composed[None], [action])
        if not ok[0]:
            raise PreconditionError(
                f"chain breaks at {action.kind} ({action.x:.3f}, {action.y:.3f})")
        ctx = new_ctxs[0]
        composed = new_comps[0]
        diffs.append(DiffDescriptor(dif[0]))
        comps.append(RasterState(composed))
    return diffs, comps
