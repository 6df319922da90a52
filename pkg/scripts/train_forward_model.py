#!/usr/bin/env python3
"""Train the differential forward model on generated interaction data.

Builds the dataset if the target directory has no manifest yet, trains,
saves the best checkpoint plus the eval history, then reports pixel MAE
on the held-out test split and runs the two introductory tasks with the
neural backend as a quick planning sanity check.
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from affplan.config import NetConfig, TrainConfig
from affplan.datagen import build_dataset, load_dataset, save_dataset
from affplan.net.metrics import eval_prediction
from affplan.net.model import init_params, param_count, save_checkpoint
from affplan.net.train import train
from affplan.tasks import build_task, run_task


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="data/interactions")
    ap.add_argument("--out", default="runs/forward_model.ckpt")
    ap.add_argument("--batches", type=int, default=20000)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--lr", type=float, default=5e-5)
    ap.add_argument("--eval-interval", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-count", type=int, default=2000)
    args = ap.parse_args()

    if not os.path.exists(os.path.join(args.data, "manifest.json")):
        print(f"building dataset at {args.data} ...", flush=True)
        splits = build_dataset(args.seed, args.train_count, 100, 100)
        save_dataset(args.data, splits, args.seed, 32)
    t0 = time.time()
    data = load_dataset(args.data)
    print(f"loaded {', '.join(f'{k}:{len(v)}' for k, v in sorted(data.items()))} "
          f"in {time.time() - t0:.0f}s", flush=True)

    cfg = NetConfig()
    params = init_params(cfg, seed=args.seed)
    print(f"{param_count(params)} parameters", flush=True)
    train_cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                            max_batches=args.batches,
                            eval_interval=args.eval_interval, seed=args.seed)

    def log(entry):
        print(f"batch {entry['batch']:6d}  train {entry['train_loss']:.5f}  "
              f"val {entry['val_loss']:.5f}  lr {entry['lr']:.2e}  "
              f"{entry['elapsed']:.0f}s", flush=True)

    result = train(params, cfg, data["train"], data["val"], train_cfg, log=log)

    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    save_checkpoint(args.out, result.params, cfg)
    with open(args.out + ".history.json", "w") as f:
        json.dump({"best_val": result.best_val, "history": result.history},
                  f, indent=2, sort_keys=True)
    print(f"saved {args.out} (best val {result.best_val:.5f}, "
          f"{result.seconds:.0f}s)", flush=True)

    report = eval_prediction(result.params, cfg, data["test"])
    print(f"test all-pixel MAE {report['all_mae']:.5f}  "
          f"changed-pixel MAE {report['changed_mae']:.5f}", flush=True)

    for i in (1, 2):
        task = build_task(i)
        res, rep = run_task(task, "neural", result.params, cfg)
        print(f"neural task{i:02d}: success={rep.success} "
              f"loss={rep.loss:.4f} steps={[a.kind for a in res.actions]}",
              flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
