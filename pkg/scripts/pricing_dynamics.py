"""Offer prices, cache prices and coin totals over time in an economy run.

Writes one CSV row per price event; the closing summary goes to stderr.

    python scripts/pricing_dynamics.py scenarios/economy.json --seed 1 > prices.csv
"""

import argparse
import csv
import sys
from collections import Counter

from swarms.crypto import SCHEMES
from swarms.scenario import load_scenario
from swarms.sim import run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--scheme", choices=sorted(SCHEMES), default="hash")
    args = ap.parse_args()

    res = run(load_scenario(args.scenario), seed=args.seed, scheme=SCHEMES[args.scheme])
    out = csv.writer(sys.stdout)
    out.writerow(["t", "node", "kind", "name", "price", "local_cost", "outcome"])
    over_cap = 0
    for r in res.records():
        if r["kind"] == "offer":
            over_cap += r["price"] > r["local_cost"] - 1
            out.writerow([r["t"], r["node"], "offer", r["name"], r["price"], r["local_cost"], ""])
        elif r["kind"] == "cache-price":
            out.writerow([r["t"], r["node"], "cache", r["name"], r["price"], "", r["outcome"]])

    totals = {total for _, total in res.metrics.total_coins}
    decisions = Counter(r["decision"] for r in res.records("decision"))
    paid = sum(r["amount"] for r in res.records("payment") if r.get("ok", True))
    print(f"coin totals seen: {sorted(totals)}", file=sys.stderr)
    print(f"offers above cap: {over_cap}", file=sys.stderr)
    print(f"coins moved: {paid}; decisions: {dict(decisions)}", file=sys.stderr)
    print(f"purges: {res.metrics.purges}", file=sys.stderr)


if __name__ == "__main__":
    main()
