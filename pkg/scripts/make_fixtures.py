#!/usr/bin/env python3
"""Write the ten authored task fixtures to fixtures/tasks/.

Each task directory holds scene.json (the start world), goal.rgbdf (the
goal patch) and task.json (polarity, channels, step budget).  Re-running
must reproduce byte-identical files.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from affplan.tasks import all_tasks, save_task


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=os.path.join(
        os.path.dirname(__file__), "..", "fixtures", "tasks"))
    args = ap.parse_args()

    for task in all_tasks():
        path = os.path.join(args.out, f"task{task.index:02d}")
        save_task(task, path)
        print(f"wrote {path} ({task.name}, {task.goal.polarity}, "
              f"n_max={task.n_max})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
