"""Sign-gradient training loop for the forward model.

Updates move every weight by a fixed amount in the direction opposing its
gradient sign, which is insensitive to the wildly different gradient
magnitudes of the pixel and latent paths.  Batch sequence length cycles
1,2,3,4 so short-horizon accuracy is rehearsed as often as long chains.
Validation runs on unaugmented held-out sequences; the best parameters by
validation loss are kept, and the step size halves after a patience worth
of stagnant evaluations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..config import NetConfig, TrainConfig
from ..datagen import Sequence, augment_sample
from .model import loss_and_grads, rollout


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_val: float = float("inf")
    batches_run: int = 0
    seconds: float = 0.0


def sign_sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                  lr: float) -> None:
    for key in params:
        params[key] -= lr * np.sign(grads[key])


def batch_loss(params, cfg: NetConfig, batch: dict, mask_weight: float = 0.1,
               changed_weight: float = 0.0, mask_bg_weight: float = 1.0) -> float:
    """Objective only, no gradients (used by validation and grad checking)."""
    states = batch["states"]
    kinds = batch["kinds"]
    numerics = batch["numerics"].astype(states.dtype)
    comps, diffs, _ = rollout(params, cfg, states[:, 0], kinds, numerics)
    loss = 0.0
    eps = 1e-3   # matches the stabilizer in loss_and_grads
    for i in range(kinds.shape[1]):
        err = comps[:, i] - states[:, i + 1]
        m = diffs[:, i, :, :, 4]
        target = ((np.abs(states[:, i + 1] - states[:, i]) > 1e-6)
                  .any(axis=-1).astype(states.dtype))
        w = 1.0 + changed_weight * target[..., None]
        loss += float((w * err * err).mean())
        loss += mask_weight * float(-(target * np.log(m + eps)
                                      + mask_bg_weight * (1 - target)
                                      * np.log(1 - m + eps)).mean())
    return loss


def _collate(seqs: list[Sequence], length: int, starts, rng,
             augment: bool, train_cfg: TrainConfig) -> dict:
    states, kinds, numerics = [], [], []
    for seq, start in zip(seqs, starts):
        s = seq.states[start:start + length + 1]
        n = seq.numerics[start:start + length]
        if augment:
            s, n = augment_sample(s, n, seq.symmetries[start:start + length],
                                  rng, train_cfg.translate_px,
                                  train_cfg.action_noise)
        states.append(s)
        kinds.append(seq.kinds[start:start + length])
        numerics.append(n)
    return {"states": np.stack(states), "kinds": np.stack(kinds),
            "numerics": np.stack(numerics)}


def validation_loss(params, cfg: NetConfig, val: list[Sequence],
                    mask_weight: float, changed_weight: float = 0.0,
                    mask_bg_weight: float = 1.0) -> float:
    """Mean full-sequence loss over the validation split, grouped by length."""
    total, n = 0.0, 0
    by_len: dict[int, list[Sequence]] = {}
    for seq in val:
        if seq.length > 0:
            by_len.setdefault(seq.length, []).append(seq)
    for length, seqs in sorted(by_len.items()):
        batch = {"states": np.stack([s.states for s in seqs]),
                 "kinds": np.stack([s.kinds for s in seqs]),
                 "numerics": np.stack([s.numerics for s in seqs])}
        total += batch_loss(params, cfg, batch, mask_weight,
                            changed_weight, mask_bg_weight) * len(seqs)
        n += len(seqs)
    return total / max(n, 1)


def train(params: dict[str, np.ndarray], net_cfg: NetConfig,
          train_seqs: list[Sequence], val_seqs: list[Sequence],
          train_cfg: TrainConfig = TrainConfig(),
          log=None) -> TrainResult:
    """Train in place; returns the best-validation copy of the parameters."""
    rng = np.random.default_rng(train_cfg.seed)
    buckets = {length: [s for s in train_seqs if s.length >= length]
               for length in range(1, train_cfg.max_seq_len + 1)}
    lengths_avail = [length for length, seqs in buckets.items() if seqs]
    if not lengths_avail:
        raise ValueError("no usable training sequences")
    lr = train_cfg.lr
    best_val = float("inf")
    best_params = {k: v.copy() for k, v in params.items()}
    stagnant = 0
    history: list[dict] = []
    t0 = time.monotonic()
    batches = 0
    for batch_idx in range(train_cfg.max_batches):
        length = lengths_avail[batch_idx % len(lengths_avail)]
        pool = buckets[length]
        picks = rng.integers(len(pool), size=train_cfg.batch_size)
        seqs = [pool[i] for i in picks]
        starts = [int(rng.integers(s.length - length + 1)) for s in seqs]
        batch = _collate(seqs, length, starts, rng, True, train_cfg)
        loss, grads, _ = loss_and_grads(params, net_cfg, batch,
                                        train_cfg.mask_loss_weight,
                                        changed_weight=train_cfg.changed_weight,
                                        mask_bg_weight=train_cfg.mask_bg_weight)
        sign_sgd_step(params, grads, lr)
        batches = batch_idx + 1
        if batches % train_cfg.eval_interval == 0 or batches == train_cfg.max_batches:
            val = validation_loss(params, net_cfg, val_seqs,
                                  train_cfg.mask_loss_weight,
                                  train_cfg.changed_weight,
                                  train_cfg.mask_bg_weight)
            if val < best_val - 1e-6:
                best_val = val
                best_params = {k: v.copy() for k, v in params.items()}
                stagnant = 0
            else:
                stagnant += 1
                if stagnant >= train_cfg.patience:
                    lr *= 0.5
                    stagnant = 0
            entry = {"batch": batches, "train_loss": loss, "val_loss": val,
                     "lr": lr, "elapsed": time.monotonic() - t0}
            history.append(entry)
            if log is not None:
                log(entry)
    return TrainResult(params=best_params, history=history, best_val=best_val,
                       batches_run=batches, seconds=time.monotonic() - t0)
