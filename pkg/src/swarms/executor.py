"""NFN-style evaluation of call expressions against logged data objects."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .naming import Call, DataRef, Expression, Name, iter_calls, parse_name, print_expression


class ExecutionError(Exception):
    pass


class UnresolvedInput(ExecutionError):
    def __init__(self, name: str):
        super().__init__(f"unresolved input {name}")
        self.name = name


class UnknownFunction(ExecutionError):
    def __init__(self, name: str):
        super().__init__(f"unknown function {name}")
        self.name = name


class FunctionFailed(ExecutionError):
    pass


@dataclass(frozen=True)
class DataObject:
    name_or_expr: str
    bytes: bytes


class Resolver(Protocol):
    def result_for(self, expr_text: str) -> bytes | None: ...

    def input_for(self, name_text: str) -> bytes | None: ...


@dataclass
class DictResolver:
    """In-memory resolver, mostly for tests."""

    results: dict[str, bytes] = field(default_factory=dict)
    inputs: dict[str, bytes] = field(default_factory=dict)

    def result_for(self, expr_text: str) -> bytes | None:
        return self.results.get(expr_text)

    def input_for(self, name_text: str) -> bytes | None:
        return self.inputs.get(name_text)


Function = Callable[[Sequence[DataObject]], bytes]


@dataclass(frozen=True)
class FunctionSpec:
    fn: Function
    cost: int


@dataclass
class FunctionTable:
    functions: dict[Name, FunctionSpec] = field(default_factory=dict)

    def register(self, name: Name | str, fn: Function, cost: int) -> None:
        if isinstance(name, str):
            name = parse_name(name)
        self.functions[name] = FunctionSpec(fn, cost)

    def __contains__(self, name: Name) -> bool:
        return name in self.functions

    def supports(self, expr: Expression) -> bool:
        return all(c.function in self.functions for c in iter_calls(expr))

    def subset(self, names: Sequence[Name]) -> "FunctionTable":
        return FunctionTable({n: s for n, s in self.functions.items() if n in set(names)})

    def with_costs(self, costs: dict[Name, int]) -> "FunctionTable":
        out = dict(self.functions)
        for n, c in costs.items():
            if n not in out:
                raise UnknownFunction(str(n))
            out[n] = FunctionSpec(out[n].fn, c)
        return FunctionTable(out)


def resolve(resolver: Resolver, ref: Expression) -> DataObject | None:
    text = print_expression(ref)
    found = resolver.result_for(text)
    if found is None and isinstance(ref, DataRef):
        found = resolver.input_for(text)
    return None if found is None else DataObject(text, found)


def evaluate(table: FunctionTable, resolver: Resolver, expr: Expression) -> bytes:
    """Evaluate ``expr``; logged results of proper sub-calls are reused."""
    return _eval(table, resolver, expr, top=True)


def _eval(table: FunctionTable, resolver: Resolver, expr: Expression, top: bool) -> bytes:
    if isinstance(expr, DataRef):
        obj = resolve(resolver, expr)
        if obj is None:
            raise UnresolvedInput(str(expr.name))
        return obj.bytes
    if not top:
        cached = resolver.result_for(print_expression(expr))
        if cached is not None:
            return cached
    spec = table.functions.get(expr.function)
    if spec is None:
        raise UnknownFunction(str(expr.function))
    args = [DataObject(print_expression(a), _eval(table, resolver, a, top=False))
            for a in expr.arguments]
    try:
        return spec.fn(args)
    except ExecutionError:
        raise
    except Exception as exc:
        raise FunctionFailed(f"{expr.function}: {exc}") from exc


def cost_of(table: FunctionTable, expr: Expression) -> int:
    total = 0
    for call in iter_calls(expr):
        spec = table.functions.get(call.function)
        if spec is None:
            raise UnknownFunction(str(call.function))
        total += spec.cost
    return total


def remaining_cost(table: FunctionTable, resolver: Resolver, expr: Expression) -> int:
    """Cost still to be paid given the sub-results already logged."""
    if isinstance(expr, DataRef):
        return 0
    spec = table.functions.get(expr.function)
    if spec is None:
        raise UnknownFunction(str(expr.function))
    total = spec.cost
    for arg in expr.arguments:
        if isinstance(arg, Call) and resolver.result_for(print_expression(arg)) is not None:
            continue
        total += remaining_cost(table, resolver, arg)
    return total


def missing_inputs(resolver: Resolver, expr: Expression) -> list[str]:
    """DataRef leaves not resolvable, skipping subtrees with logged results."""
    if isinstance(expr, DataRef):
        return [] if resolve(resolver, expr) is not None else [str(expr.name)]
    out = []
    for arg in expr.arguments:
        if isinstance(arg, Call) and resolver.result_for(print_expression(arg)) is not None:
            continue
        out.extend(missing_inputs(resolver, arg))
    return out


# -- demo table --------------------------------------------------------------

def _concat(args: Sequence[DataObject]) -> bytes:
    return b"".join(a.bytes for a in args)


def _sum(args: Sequence[DataObject]) -> bytes:
    return str(sum(int(a.bytes.decode("ascii")) for a in args)).encode("ascii")


def _upper(args: Sequence[DataObject]) -> bytes:
    return b"".join(a.bytes for a in args).upper()


def _wordcount(args: Sequence[DataObject]) -> bytes:
    return str(sum(len(a.bytes.split()) for a in args)).encode("ascii")


def _sleep(args: Sequence[DataObject]) -> bytes:
    return args[0].bytes if args else b""


DEMO_COSTS = {
    "/fn/concat": 4,
    "/fn/sum": 5,
    "/fn/upper": 3,
    "/fn/wordcount": 6,
    "/fn/sleep": 50,
}


def demo_table() -> FunctionTable:
    """concat, sum (decimal integers), upper, wordcount and sleep (pure delay)."""
    t = FunctionTable()
    for fn, name in ((_concat, "/fn/concat"), (_sum, "/fn/sum"), (_upper, "/fn/upper"),
                     (_wordcount, "/fn/wordcount"), (_sleep, "/fn/sleep")):
        t.register(name, fn, DEMO_COSTS[name])
    return t
