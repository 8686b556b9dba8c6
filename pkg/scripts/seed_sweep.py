"""Run one scenario over a range of seeds and tabulate completion and traffic.

    python scripts/seed_sweep.py scenarios/recovery.json --seeds 0 20
"""

import argparse
import csv
import statistics
import sys

from swarms.crypto import SCHEMES
from swarms.scenario import load_scenario
from swarms.sim import run


def sweep(path, seeds, scheme):
    sc = load_scenario(path)
    for seed in seeds:
        res = run(sc, seed=seed, scheme=scheme)
        tasks = list(res.metrics.tasks.values())
        done = [t for t in tasks if t.completed_at is not None]
        latency = [t.completed_at - t.injected_at for t in done]
        yield {
            "seed": seed,
            "tasks": len(tasks),
            "completed": len(done),
            "median_latency_ms": statistics.median(latency) if latency else "",
            "messages": sum(res.metrics.census.values()),
            "dropped": sum(res.metrics.drops.values()),
            "digest": res.digest[:16],
        }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario")
    ap.add_argument("--seeds", nargs=2, type=int, default=(0, 10), metavar=("FIRST", "STOP"))
    ap.add_argument("--scheme", choices=sorted(SCHEMES), default="hash")
    args = ap.parse_args()
    rows = sweep(args.scenario, range(*args.seeds), SCHEMES[args.scheme])
    writer = None
    for row in rows:
        if writer is None:
            writer = csv.DictWriter(sys.stdout, fieldnames=list(row))
            writer.writeheader()
        writer.writerow(row)


if __name__ == "__main__":
    main()
