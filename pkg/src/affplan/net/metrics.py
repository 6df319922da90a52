"""Prediction quality metrics over held-out sequences."""

from __future__ import annotations

import numpy as np

from ..config import NetConfig
from .model import rollout


def eval_prediction(params, cfg: NetConfig, sequences,
                    max_sequences: int | None = None) -> dict:
    """Pixel MAE of composed predictions against ground-truth renders.

    Reported both over every pixel/channel ("all") and restricted to the
    pixels the world actually changed at that step ("changed"), per step
    index and in aggregate.
    """
    if max_sequences is not None:
        sequences = sequences[:max_sequences]
    by_len: dict[int, list] = {}
    for seq in sequences:
        if seq.length > 0:
            by_len.setdefault(seq.length, []).append(seq)
    sum_all = cnt_all = 0.0
    sum_changed = cnt_changed = 0.0
    per_step: dict[int, dict[str, float]] = {}
    for length, seqs in sorted(by_len.items()):
        states = np.stack([s.states for s in seqs])
        kinds = np.stack([s.kinds for s in seqs])
        numerics = np.stack([s.numerics for s in seqs]).astype(states.dtype)
        comps, _, _ = rollout(params, cfg, states[:, 0], kinds, numerics)
        for i in range(length):
            err = np.abs(comps[:, i] - states[:, i + 1])
            changed = (np.abs(states[:, i + 1] - states[:, i]) > 1e-6).any(axis=-1)
            slot = per_step.setdefault(i, {"sum_all": 0.0, "cnt_all": 0.0,
                                           "sum_changed": 0.0, "cnt_changed": 0.0})
            slot["sum_all"] += float(err.sum())
            slot["cnt_all"] += err.size
            slot["sum_changed"] += float(err[changed].sum())
            slot["cnt_changed"] += float(changed.sum()) * 4
    for slot in per_step.values():
        sum_all += slot["sum_all"]
        cnt_all += slot["cnt_all"]
        sum_changed += slot["sum_changed"]
        cnt_changed += slot["cnt_changed"]
    return {
        "all_mae": sum_all / cnt_all if cnt_all else 0.0,
        "changed_mae": sum_changed / cnt_changed if cnt_changed else 0.0,
        "per_step": {
            i: {"all_mae": s["sum_all"] / s["cnt_all"] if s["cnt_all"] else 0.0,
                "changed_mae": (s["sum_changed"] / s["cnt_changed"]
                                if s["cnt_changed"] else 0.0)}
            for i, s in sorted(per_step.items())},
        "n_sequences": sum(len(v) for v in by_len.values()),
    }
