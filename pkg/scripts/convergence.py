"""How quickly replicas agree: time from the last append to identical logs.

Runs the scenario once per seed and reports, per log-pair, whether all
holders ended with byte-identical Valid logs and when the last change landed.

    python scripts/convergence.py scenarios/partition.json --seeds 0 5
"""

import argparse

from swarms.crypto import SCHEMES
from swarms.scenario import load_scenario
from swarms.sim import run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario")
    ap.add_argument("--seeds", nargs=2, type=int, default=(0, 5), metavar=("FIRST", "STOP"))
    ap.add_argument("--scheme", choices=sorted(SCHEMES), default="hash")
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    last_scripted = max((a.time for a in sc.actions), default=0)
    print(f"{'seed':>4} {'name':<28} {'holders':>7} {'converged':>9} {'valid':>5} {'settle_ms':>9}")
    for seed in range(*args.seeds):
        res = run(sc, seed=seed, scheme=SCHEMES[args.scheme])
        for name, c in sorted(res.metrics.convergence.items()):
            settle = max(c["last_change"] - last_scripted, 0)
            print(f"{seed:>4} {name:<28} {c['holders']:>7} {str(c['converged']):>9} "
                  f"{str(c['all_valid']):>5} {settle:>9}")


if __name__ == "__main__":
    main()
