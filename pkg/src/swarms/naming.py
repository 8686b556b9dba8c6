"""ICN-style names and NFN-style call expressions.

Grammar::

    expr := name | name '(' [expr (',' expr)*] ')'
    name := ('/' component)+

Whitespace around tokens is ignored. A component is any run of characters
other than ``/``, ``(``, ``)``, ``,`` and whitespace.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, total_ordering
from typing import Iterator, Union

SEPARATOR = "/"
_RESERVED = frozenset("/(),")


class NameParseError(ValueError):
    pass


class EmptyName(NameParseError):
    pass


class EmptyComponent(NameParseError):
    pass


class MissingLeadingSeparator(NameParseError):
    pass


class InvalidCharacter(NameParseError):
    pass


class ExprSyntaxError(ValueError):
    """Raised for malformed expressions; ``offset`` is a UTF-8 byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.reason = message
        self.offset = offset


def _is_component_char(ch: str) -> bool:
    return ch not in _RESERVED and not ch.isspace()


@total_ordering
@dataclass(frozen=True, eq=True)
class Name:
    components: tuple[str, ...]

    def __post_init__(self):
        if not self.components:
            raise EmptyName("a name needs at least one component")
        for c in self.components:
            if not c:
                raise EmptyComponent("empty name component")
            if not all(_is_component_char(ch) for ch in c):
                raise InvalidCharacter(f"invalid character in component {c!r}")

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash(self.components)
            object.__setattr__(self, "_hash", h)
        return h

    def __str__(self) -> str:
        text = self.__dict__.get("_text")
        if text is None:
            text = SEPARATOR + SEPARATOR.join(self.components)
            object.__setattr__(self, "_text", text)
        return text

    def __repr__(self) -> str:
        return f"Name({str(self)!r})"

    # component-wise lexicographic order
    def __lt__(self, other: "Name") -> bool:
        if not isinstance(other, Name):
            return NotImplemented
        return self.components < other.components

    def child(self, *components: str) -> "Name":
        return Name(self.components + tuple(components))

    def is_prefix_of(self, other: "Name") -> bool:
        n = len(self.components)
        return other.components[:n] == self.components


@lru_cache(maxsize=1 << 16)
def parse_name(text: str) -> Name:
    if not text or all(ch == SEPARATOR for ch in text):
        raise EmptyName(f"empty name: {text!r}")
    if not text.startswith(SEPARATOR):
        raise MissingLeadingSeparator(f"name must start with '/': {text!r}")
    body = text[1:]
    if body.endswith(SEPARATOR):
        body = body[:-1]
    parts = body.split(SEPARATOR)
    if any(p == "" for p in parts):
        raise EmptyComponent(f"empty component in {text!r}")
    return Name(tuple(parts))


@dataclass(frozen=True)
class DataRef:
    name: Name

    def __str__(self) -> str:
        return str(self.name)


@dataclass(frozen=True)
class Call:
    function: Name
    arguments: tuple["Expression", ...] = ()

    def __str__(self) -> str:
        return print_expression(self)


Expression = Union[DataRef, Call]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str, pos: int | None = None) -> ExprSyntaxError:
        pos = self.pos if pos is None else pos
        return ExprSyntaxError(message, len(self.text[:pos].encode("utf-8")))

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def name(self) -> Name:
        self.skip_ws()
        components = []
        if self.peek() != SEPARATOR:
            raise self.error("expected a name")
        while self.peek() == SEPARATOR:
            self.pos += 1
            start = self.pos
            while self.pos < len(self.text) and _is_component_char(self.text[self.pos]):
                self.pos += 1
            if self.pos == start:
                raise self.error("empty name component")
            components.append(self.text[start:self.pos])
        return Name(tuple(components))

    def expr(self) -> Expression:
        head = self.name()
        self.skip_ws()
        if self.peek() != "(":
            return DataRef(head)
        self.pos += 1
        args: list[Expression] = []
        self.skip_ws()
        if self.peek() == ")":
            self.pos += 1
            return Call(head, ())
        while True:
            self.skip_ws()
            if self.peek() in (",", ")"):
                raise self.error("empty argument")
            if self.peek() == "":
                raise self.error("unbalanced parenthesis")
            args.append(self.expr())
            self.skip_ws()
            ch = self.peek()
            if ch == ",":
                self.pos += 1
            elif ch == ")":
                self.pos += 1
                return Call(head, tuple(args))
            elif ch == "":
                raise self.error("unbalanced parenthesis")
            else:
                raise self.error(f"unexpected character {ch!r}")


@lru_cache(maxsize=1 << 16)  # results are immutable, so sharing them is safe
def parse_expression(text: str) -> Expression:
    p = _Parser(text)
    e = p.expr()
    p.skip_ws()
    if p.pos != len(text):
        raise p.error("trailing characters")
    return e


def print_expression(expr: Expression) -> str:
    if isinstance(expr, DataRef):
        return str(expr.name)
    return f"{expr.function}({','.join(print_expression(a) for a in expr.arguments)})"


def iter_calls(expr: Expression) -> Iterator[Call]:
    """Yield every Call node in post-order."""
    if isinstance(expr, Call):
        for arg in expr.arguments:
            yield from iter_calls(arg)
        yield expr


def iter_data_refs(expr: Expression) -> Iterator[DataRef]:
    if isinstance(expr, DataRef):
        yield expr
    else:
        for arg in expr.arguments:
            yield from iter_data_refs(arg)


@dataclass(frozen=True)
class TaskTree:
    root: Expression
    subtasks: tuple[Call, ...]


def decompose(expr: Expression) -> TaskTree:
    return TaskTree(expr, tuple(iter_calls(expr)))
