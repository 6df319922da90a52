"""Command line entry points.

Subcommands cover the full pipeline: generate interaction data, train the
forward model, evaluate prediction error, plan against a goal patch, run
the authored task suite, and render a scene to an image.

Exit codes: 0 on success, 1 on bad usage, 2 when a requested plan or task
does not succeed, 3 on a reported runtime failure (unreadable file,
mismatched config and the like).  Timing goes to stderr so stdout stays
parseable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import config as C
from .backends import NeuralBackend, OracleBackend
from .config import NetConfig, TrainConfig
from .datagen import build_dataset, load_dataset, save_dataset
from .detect import eval_recall, ground_truth_detections, recognise
from .errors import AffplanError, ConfigurationError
from .net.metrics import eval_prediction
from .net.model import (init_params, load_checkpoint, param_count,
                        save_checkpoint)
from .net.train import train
from .planner import execute_plan, plan, save_plan
from .raster import NEGATIVE, POSITIVE, export_ppm, load_goal
from .tasks import build_task, load_task, run_task
from .world import load_scene, random_scene, render


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this project reserves 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _timed(label: str, t0: float) -> None:
    print(f"[time] {label}: {time.perf_counter() - t0:.2f}s", file=sys.stderr)


# --- subcommands --------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    t0 = time.perf_counter()
    splits = build_dataset(args.seed, args.train, args.val, args.test,
                           args.resolution, args.max_steps)
    save_dataset(args.out, splits, args.seed, args.resolution)
    for name in sorted(splits):
        seqs = splits[name]
        steps = sum(s.length for s in seqs)
        print(f"{name}: {len(seqs)} sequences, {steps} steps")
    _timed("gen-data", t0)
    return 0


def _cmd_train(args) -> int:
    t0 = time.perf_counter()
    data = load_dataset(args.data, splits=("train", "val"))
    cfg = NetConfig(resolution=args.resolution)
    train_cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                            max_batches=args.batches,
                            eval_interval=args.eval_interval,
                            seed=args.seed)
    params = init_params(cfg, seed=args.seed)
    print(f"model: {param_count(params)} parameters", file=sys.stderr)

    def log(entry):
        print(f"batch {entry['batch']:6d}  train {entry['train_loss']:.5f}  "
              f"val {entry['val_loss']:.5f}  lr {entry['lr']:.2e}  "
              f"{entry['elapsed']:.0f}s", file=sys.stderr)

    result = train(params, cfg, data["train"], data["val"], train_cfg, log=log)
    save_checkpoint(args.out, result.params, cfg)
    print(json.dumps({"best_val": result.best_val,
                      "batches": result.batches_run,
                      "seconds": round(result.seconds, 1),
                      "checkpoint": args.out}, sort_keys=True))
    _timed("train", t0)
    return 0


def _cmd_eval(args) -> int:
    if args.mode == "recognition":
        return _eval_recognition(args)
    if not args.model or not args.data:
        print("affplan eval: error: --mode prediction needs --model and --data",
              file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    params, cfg = load_checkpoint(args.model)
    data = load_dataset(args.data, splits=(args.split,))
    report = eval_prediction(params, cfg, data[args.split],
                             max_sequences=args.max_sequences)
    print(json.dumps(report, sort_keys=True, default=float))
    _timed("eval", t0)
    if args.strict:
        bad = (report["changed_mae"] > 0.08) or (report["all_mae"] > 0.01)
        return 2 if bad else 0
    return 0


def _eval_recognition(args) -> int:
    """Recall of the recognition pipeline on freshly rendered scenes."""
    t0 = time.perf_counter()
    totals: dict[str, list[int]] = {}
    n_truth = n_matched = n_spurious = 0
    for i in range(args.scenes):
        world = random_scene(args.seed + i)
        summary = recognise(render(world, args.resolution), cutoff=args.cutoff)
        rep = eval_recall(ground_truth_detections(world),
                          list(summary.detections))
        n_truth += rep.n_truth
        n_matched += rep.n_matched
        n_spurious += rep.n_spurious
        for kind, m, t in rep.per_kind:
            acc = totals.setdefault(kind, [0, 0])
            acc[0] += m
            acc[1] += t
    recall = n_matched / n_truth if n_truth else 1.0
    spurious = n_spurious / args.scenes
    for kind in sorted(totals):
        m, t = totals[kind]
        print(f"{kind:10s} recall {m / t if t else 1.0:.3f}  ({m}/{t})")
    print(f"{'overall':10s} recall {recall:.3f}  ({n_matched}/{n_truth})")
    print(f"spurious/image {spurious:.3f}")
    _timed("eval", t0)
    if args.strict and (recall < 0.95 or spurious > 0.2):
        return 2
    return 0


def _make_backend(args, world):
    if args.backend == "oracle":
        return OracleBackend(world, args.resolution)
    if args.backend == "neural":
        if not args.model:
            raise ConfigurationError("--backend neural needs --model")
        params, cfg = load_checkpoint(args.model)
        if cfg.resolution != args.resolution:
            raise ConfigurationError(
                f"checkpoint is {cfg.resolution}x{cfg.resolution} but "
                f"--resolution is {args.resolution}")
        return NeuralBackend(params, cfg)
    raise ConfigurationError(f"unknown backend {args.backend!r}")


def _cmd_plan(args) -> int:
    t0 = time.perf_counter()
    world = load_scene(args.scene)
    channels = (0, 1, 2) if args.channels == "rgb" else (0, 1, 2, 3)
    goal = load_goal(args.goal, args.polarity, channels)
    backend = _make_backend(args, world)
    root = render(world, args.resolution)
    result = plan(root, goal, backend, n_max=args.n_max)
    summary = {"loss": result.loss, "n_nodes": result.n_nodes,
               "steps": [a.kind for a in result.actions]}
    code = 0
    if args.execute:
        report = execute_plan(world, result, goal, args.resolution)
        summary["executed"] = report.success
        summary["executed_loss"] = report.loss
        if not report.success:
            code = 2
    if args.out:
        save_plan(result, args.out)
    print(json.dumps(summary, sort_keys=True, default=float))
    _timed("plan", t0)
    return code


def _cmd_tasks(args) -> int:
    t0 = time.perf_counter()
    indices = ([int(x) for x in args.only.split(",")] if args.only
               else list(range(1, 11)))
    params = cfg = None
    if args.backend == "neural":
        if not args.model:
            raise ConfigurationError("--backend neural needs --model")
        params, cfg = load_checkpoint(args.model)
    failures = 0
    for i in indices:
        if args.fixtures:
            task = load_task(os.path.join(args.fixtures, f"task{i:02d}"))
        else:
            task = build_task(i)
        tt = time.perf_counter()
        result, report = run_task(task, args.backend, params, cfg)
        status = "pass" if report.success else "FAIL"
        print(f"task{task.index:02d} {task.name:20s} {status}  "
              f"loss={report.loss:.4f} thr={report.threshold:.2f} "
              f"({task.goal.polarity}) steps={len(result.actions)} "
              f"nodes={result.n_nodes}")
        _timed(f"task{task.index:02d}", tt)
        failures += 0 if report.success else 1
    print(f"{len(indices) - failures}/{len(indices)} tasks passed")
    _timed("tasks", t0)
    return 2 if (failures and args.strict) else 0


def _cmd_render(args) -> int:
    world = load_scene(args.scene)
    state = render(world, args.resolution)
    export_ppm(state, args.out, depth_path=args.depth)
    print(f"wrote {args.out}")
    return 0


# --- wiring -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="affplan",
                 description="foresight planning on a tabletop micro-world")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an interaction dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--train", type=int, default=2000)
    g.add_argument("--val", type=int, default=100)
    g.add_argument("--test", type=int, default=100)
    g.add_argument("--resolution", type=int, default=32)
    g.add_argument("--max-steps", type=int, default=4)
    g.set_defaults(fn=_cmd_gen_data)

    t = sub.add_parser("train", help="train the differential forward model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--batches", type=int, default=20000)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=5e-5)
    t.add_argument("--eval-interval", type=int, default=500)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--resolution", type=int, default=32)
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="prediction error or recognition recall")
    e.add_argument("--mode", choices=("prediction", "recognition"),
                   default="prediction")
    e.add_argument("--data", help="dataset dir (prediction mode)")
    e.add_argument("--model", help="checkpoint path (prediction mode)")
    e.add_argument("--split", default="test")
    e.add_argument("--max-sequences", type=int, default=None)
    e.add_argument("--scenes", type=int, default=100,
                   help="scene count (recognition mode)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--cutoff", type=float, default=C.CONFIDENCE_CUTOFF)
    e.add_argument("--resolution", type=int, default=32)
    e.add_argument("--strict", action="store_true",
                   help="exit 2 when below the accuracy floor")
    e.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("plan", help="search for a plan toward a goal patch")
    p.add_argument("--scene", required=True)
    p.add_argument("--goal", required=True)
    p.add_argument("--polarity", choices=(POSITIVE, NEGATIVE),
                   default=POSITIVE)
    p.add_argument("--channels", choices=("rgb", "rgbd"), default="rgbd")
    p.add_argument("--backend", choices=("oracle", "neural"),
                   default="oracle")
    p.add_argument("--model")
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--execute", action="store_true",
                   help="run the plan in the simulator and check the goal")
    p.add_argument("--out", help="write the chosen plan as json")
    p.set_defaults(fn=_cmd_plan)

    k = sub.add_parser("tasks", help="run the authored task suite")
    k.add_argument("--fixtures", help="load tasks from fixture dirs instead "
                                      "of building them in process")
    k.add_argument("--only", help="comma separated task numbers")
    k.add_argument("--backend", choices=("oracle", "neural"),
                   default="oracle")
    k.add_argument("--model")
    k.add_argument("--strict", action="store_true",
                   help="exit 2 if any task fails")
    k.set_defaults(fn=_cmd_tasks)

    r = sub.add_parser("render", help="render a scene file to a ppm image")
    r.add_argument("--scene", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--depth", help="also write the depth plane as pgm")
    r.add_argument("--resolution", type=int, default=32)
    r.set_defaults(fn=_cmd_render)

    for sp in (g, t, e, p, k, r):
        sp.add_argument("--config", help="JSON file of flag values; flags "
                                         "given on the command line win")
    return ap


def _apply_config(args, argv) -> None:
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as fh:
            overrides = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config {args.config}: {e}")
    if not isinstance(overrides, dict):
        raise ConfigurationError("--config must hold a JSON object")
    given = {tok[2:].split("=", 1)[0].replace("-", "_")
             for tok in (argv if argv is not None else sys.argv[1:])
             if tok.startswith("--")}
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest in ("fn", "command", "config") or not hasattr(args, dest):
            raise ConfigurationError(f"unknown config key {key!r}")
        if dest not in given:
            setattr(args, dest, value)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _apply_config(args, argv)
        return args.fn(args)
    except AffplanError as e:
        print(f"affplan: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
