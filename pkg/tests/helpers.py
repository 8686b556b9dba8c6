"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import random

from swarms.crypto import HASH
from swarms.naming import Call, DataRef, Expression, parse_name, print_expression
from swarms.swarm import Node, ProtocolConfig
from swarms.executor import demo_table


def make_node(node_id: str, scheme=HASH, **cfg) -> Node:
    key = scheme.keypair(node_id.encode())
    return Node(node_id, key, ProtocolConfig(**cfg), demo_table(),
                rng=random.Random(f"rng/{node_id}"))


# -- an evaluator written independently of swarms.executor ------------------

def oracle_eval(expr: Expression, data: dict[str, bytes]) -> bytes:
    if isinstance(expr, DataRef):
        return data[str(expr.name)]
    args = [oracle_eval(a, data) for a in expr.arguments]
    fn = str(expr.function)
    if fn == "/fn/concat":
        out = b""
        for a in args:
            out += a
        return out
    if fn == "/fn/sum":
        total = 0
        for a in args:
            total += int(a)
        return str(total).encode()
    if fn == "/fn/upper":
        return bytes(b - 32 if 97 <= b <= 122 else b for a in args for b in a)
    if fn == "/fn/wordcount":
        return str(sum(len(a.split()) for a in args)).encode()
    if fn == "/fn/sleep":
        return args[0] if args else b""
    raise KeyError(fn)


def oracle_subexpressions(expr: Expression) -> list[Call]:
    """Every call in the tree, children before parents."""
    out: list[Call] = []
    stack = [(expr, False)]
    while stack:
        node, expanded = stack.pop()
        if isinstance(node, DataRef):
            continue
        if expanded:
            out.append(node)
        else:
            stack.append((node, True))
            for a in reversed(node.arguments):
                stack.append((a, False))
    return out


WORDS = ["ant", "bee", "cat", "dog", "elk", "fox", "gnu"]


def random_tree(rng: random.Random, prefix: str, max_depth: int = 5) -> tuple[Call, dict[str, bytes]]:
    """A random well-typed call tree over the demo table plus its input data."""
    data: dict[str, bytes] = {}

    def leaf(numeric: bool) -> DataRef:
        name = f"{prefix}/d{len(data)}"
        data[name] = str(rng.randint(0, 99)).encode() if numeric else " ".join(
            rng.sample(WORDS, rng.randint(1, 3))).encode()
        return DataRef(parse_name(name))

    def gen(depth: int, numeric: bool) -> Expression:
        if depth == 0 or rng.random() < 0.3:
            return leaf(numeric)
        if numeric:
            fn = rng.choice(["/fn/sum", "/fn/wordcount"])
        else:
            fn = rng.choice(["/fn/concat", "/fn/upper", "/fn/sleep", "/fn/sum", "/fn/wordcount"])
        arity = rng.randint(1, 3)
        args = tuple(gen(depth - 1, fn == "/fn/sum") for _ in range(arity))
        return Call(parse_name(fn), args)

    root = gen(max_depth, False)
    while not isinstance(root, Call):
        root = gen(max_depth, False)
    return root, data


def text(expr: Expression) -> str:
    return print_expression(expr)
