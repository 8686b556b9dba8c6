"""Command line: ``swarms run|verify|expr``.

Exit codes: 0 success (or a Valid log), 2 input error, 3 ProvisionallyValid,
4 Invalid.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .crypto import SCHEMES
from .log import Verdict, dump_log, load_log, verify_chain
from .naming import DataRef, Expression, ExprSyntaxError, parse_expression, print_expression
from .scenario import ScenarioError, load_scenario
from .sim import Simulator
from .wire import DecodeError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PROVISIONAL = 3
EXIT_INVALID = 4

_VERDICT_EXIT = {
    Verdict.VALID: EXIT_OK,
    Verdict.PROVISIONALLY_VALID: EXIT_PROVISIONAL,
    Verdict.INVALID: EXIT_INVALID,
}


def _tree(expr: Expression, depth: int = 0) -> list[str]:
    pad = "  " * depth
    if isinstance(expr, DataRef):
        return [f"{pad}data {expr.name}"]
    lines = [f"{pad}call {expr.function}"]
    for arg in expr.arguments:
        lines += _tree(arg, depth + 1)
    return lines


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.file)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    scheme = SCHEMES[args.scheme]
    if args.out:
        out = open(args.out, "w", encoding="utf-8")
    else:
        out = sys.stdout
    try:
        sim = Simulator(scenario, seed=args.seed, duration=args.duration, scheme=scheme,
                        sink=lambda line: out.write(line + "\n"))
        result = sim.run()
    finally:
        if out is not sys.stdout:
            out.close()
    if args.dump_dir:
        root = Path(args.dump_dir)
        root.mkdir(parents=True, exist_ok=True)
        for nid, node in sorted(result.nodes.items()):
            for name, pair in sorted(node.store.pairs.items()):
                stem = str(name).strip("/").replace("/", "_")
                for which, log in (("request", pair.request_log), ("result", pair.result_log)):
                    if log is not None:
                        (root / f"{nid}.{stem}.{which}.log").write_bytes(dump_log(log))
    if not args.quiet and args.out:
        m = result.metrics
        done = sum(1 for t in m.tasks.values() if t.completed_at is not None)
        print(f"tasks {done}/{len(m.tasks)} completed, {sum(m.census.values())} messages, "
              f"trace digest {result.digest}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        log = load_log(Path(args.file).read_bytes(), args.scheme)
    except (OSError, DecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = verify_chain(log)
    if not args.quiet:
        print(json.dumps({
            "name": str(log.name),
            "entries": len(log),
            "verdict": report.verdict.value,
            "signatures_ok": report.signatures_ok,
            "bad_signatures": list(report.bad_signatures),
            "chain_breaks": list(report.chain_breaks),
        }, sort_keys=True))
    return _VERDICT_EXIT[report.verdict]


def cmd_expr(args) -> int:
    try:
        expr = parse_expression(args.text)
    except ExprSyntaxError as exc:
        print(f"syntax error at offset {exc.offset}: {exc.reason}", file=sys.stderr)
        return EXIT_INPUT
    canonical = print_expression(expr)
    if args.roundtrip:
        again = parse_expression(canonical)
        if again != expr or print_expression(again) != canonical:
            print("round-trip mismatch", file=sys.stderr)
            return EXIT_INPUT
    if not args.quiet:
        print("\n".join(_tree(expr)))
        print(canonical)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarms")
    p.add_argument("--quiet", action="store_true", help="suppress informational output")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write its trace")
    r.add_argument("file")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--duration", type=int, help="override the scenario duration (ms)")
    r.add_argument("--dump-dir", help="write every node's logs in the dump format here")
    r.add_argument("--scheme", choices=sorted(SCHEMES), default="ed25519")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check a log dump")
    v.add_argument("file")
    v.add_argument("--scheme", choices=sorted(SCHEMES), default="ed25519")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("expr", help="parse and print an expression")
    e.add_argument("text")
    e.add_argument("--roundtrip", action="store_true")
    e.set_defaults(func=cmd_expr)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
