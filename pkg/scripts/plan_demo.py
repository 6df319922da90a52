#!/usr/bin/env python3
"""Plan one authored task, execute it, and dump every frame as PPM.

Writes imagined frames (what the planner believed would happen) next to
executed frames (what the simulator actually did) so the two rows can be
compared side by side.  With --backend neural the imagined row shows the
forward model's predictions.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from affplan.net.model import load_checkpoint
from affplan.raster import RasterState, export_ppm
from affplan.tasks import build_task, run_task
from affplan.world import render


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--task", type=int, default=1)
    ap.add_argument("--backend", choices=("oracle", "neural"),
                    default="oracle")
    ap.add_argument("--model", default="runs/forward_model.ckpt")
    ap.add_argument("--out", default="runs/demo")
    args = ap.parse_args()

    params = cfg = None
    if args.backend == "neural":
        params, cfg = load_checkpoint(args.model)
    task = build_task(args.task)
    result, report = run_task(task, args.backend, params, cfg)

    os.makedirs(args.out, exist_ok=True)
    for i, frame in enumerate(result.frames):
        export_ppm(RasterState(frame),
                   os.path.join(args.out, f"imagined_{i}.ppm"))
    for i, world in enumerate(report.worlds):
        export_ppm(render(world, 32),
                   os.path.join(args.out, f"executed_{i}.ppm"))
    export_ppm(report.final_render, os.path.join(args.out, "final.ppm"))

    steps = ", ".join(a.kind for a in result.actions) or "(empty plan)"
    print(f"task{task.index:02d} [{args.backend}] plan: {steps}")
    print(f"planned loss {result.loss:.4f} at offset {result.offset}, "
          f"{result.n_nodes} nodes")
    print(f"executed: success={report.success} loss={report.loss:.4f} "
          f"threshold={report.threshold} ({report.polarity})")
    print(f"frames in {args.out}/")
    return 0 if report.success else 1


if __name__ == "__main__":
    sys.exit(main())
