"""Scenario files: JSON documents describing a simulation run.

See ``docs/scenario.md`` for the schema and defaults. Validation errors carry a
JSON-path style location, e.g. ``nodes[2].id``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .naming import parse_expression, parse_name
from .swarm import ConfigError, Mode, ProtocolConfig

CHURN_ACTIONS = ("join", "leave", "crash")
ACTIONS = ("verify", "forge", "append", "credit")
MODELS = ("static", "scripted", "waypoint")
TAKER = "@taker"


class ScenarioError(ValueError):
    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass
class NodeSpec:
    id: str
    coins: int | None = None
    functions: list[str] | None = None  # None: the whole table
    data: dict[str, str] = field(default_factory=dict)
    protocol: dict[str, Any] = field(default_factory=dict)
    join_at: int = 0


@dataclass
class ContactEvent:
    time: int
    a: str
    b: str
    up: bool


@dataclass
class Connectivity:
    model: str = "static"
    edges: list[tuple[str, str]] | str = "full"
    events: list[ContactEvent] = field(default_factory=list)
    area: tuple[float, float] = (100.0, 100.0)
    speed: tuple[float, float] = (1.0, 5.0)  # metres per second
    pause: tuple[int, int] = (0, 2000)
    radio_range: float = 30.0


@dataclass
class Injection:
    time: int
    issuer: str
    expr: str
    name: str | None = None
    price: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    results: dict[str, str] = field(default_factory=dict)


@dataclass
class ChurnEvent:
    time: int
    node: str
    action: str


@dataclass
class Action:
    time: int
    node: str
    action: str
    name: str | None = None
    label: str | None = None
    value: str = ""
    amount: int = 0


@dataclass
class Scenario:
    nodes: list[NodeSpec]
    duration: int
    seed: int = 0
    mode: str = "ttl"
    protocol: dict[str, Any] = field(default_factory=dict)
    functions: dict[str, int] = field(default_factory=dict)
    latency: tuple[int, int] = (5, 20)
    loss: float = 0.0
    connectivity: Connectivity = field(default_factory=Connectivity)
    tasks: list[Injection] = field(default_factory=list)
    churn: list[ChurnEvent] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    sample_period: int = 1000
    initial_balance: int = 1000
    label: str = ""

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def protocol_for(self, spec: NodeSpec) -> ProtocolConfig:
        merged = {**self.protocol, **spec.protocol, "mode": self.mode}
        if "interest_prefixes" in merged:
            merged["interest_prefixes"] = tuple(parse_name(p) for p in merged["interest_prefixes"])
        return ProtocolConfig(**merged)


def _req(obj: dict, key: str, loc: str, typ=None):
    if key not in obj:
        raise ScenarioError(loc, f"missing required field '{key}'")
    value = obj[key]
    if typ is not None and not isinstance(value, typ) or isinstance(value, bool) and typ is int:
        raise ScenarioError(f"{loc}.{key}", f"expected {getattr(typ, '__name__', typ)}")
    return value


def _opt(obj: dict, key: str, loc: str, typ, default):
    if key not in obj:
        return default
    value = obj[key]
    if not isinstance(value, typ) or (isinstance(value, bool) and typ in (int, (int, float))):
        raise ScenarioError(f"{loc}.{key}", f"expected {typ}")
    return value


def _pair(value, loc: str, typ=int) -> tuple:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, typ) for v in value)):
        raise ScenarioError(loc, "expected a two-element list")
    return tuple(value)


_PROTOCOL_FIELDS = {f.name for f in fields(ProtocolConfig)} - {"mode", "seed"}


def _protocol(obj, loc: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(loc, "expected an object")
    for k in obj:
        if k not in _PROTOCOL_FIELDS:
            raise ScenarioError(f"{loc}.{k}", "unknown protocol parameter")
    return dict(obj)


def _check_name(text: str, loc: str) -> None:
    try:
        parse_name(text)
    except ValueError as exc:
        raise ScenarioError(loc, str(exc)) from None


def parse_scenario(doc: Any) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario must be an object")
    nodes_raw = _req(doc, "nodes", "$", list)
    if not nodes_raw:
        raise ScenarioError("$.nodes", "at least one node is required")
    nodes = []
    for i, n in enumerate(nodes_raw):
        loc = f"$.nodes[{i}]"
        if not isinstance(n, dict):
            raise ScenarioError(loc, "expected an object")
        spec = NodeSpec(
            id=_req(n, "id", loc, str),
            coins=_opt(n, "coins", loc, int, None),
            functions=_opt(n, "functions", loc, list, None),
            data=_opt(n, "data", loc, dict, {}),
            protocol=_protocol(n.get("protocol", {}), f"{loc}.protocol"),
            join_at=_opt(n, "join_at", loc, int, 0),
        )
        for j, f in enumerate(spec.functions or []):
            _check_name(f, f"{loc}.functions[{j}]")
        for k in spec.data:
            _check_name(k, f"{loc}.data.{k}")
        nodes.append(spec)
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ScenarioError("$.nodes", "duplicate node id")
    known = set(ids)

    def node_ref(value, loc, allow_taker=False):
        if allow_taker and value == TAKER:
            return value
        if value not in known:
            raise ScenarioError(loc, f"undefined node '{value}'")
        return value

    duration = _req(doc, "duration", "$", int)
    if duration <= 0:
        raise ScenarioError("$.duration", "must be > 0")
    mode = _opt(doc, "mode", "$", str, "ttl")
    if mode not in ("ttl", "economy"):
        raise ScenarioError("$.mode", "must be 'ttl' or 'economy'")

    net = _opt(doc, "network", "$", dict, {})
    latency = _pair(net.get("latency", [5, 20]), "$.network.latency")
    if latency[0] < 0 or latency[1] < latency[0]:
        raise ScenarioError("$.network.latency", "need 0 <= min <= max")
    loss = _opt(net, "loss", "$.network", (int, float), 0.0)
    if not 0 <= loss <= 1:
        raise ScenarioError("$.network.loss", "must be within [0, 1]")

    conn_raw = _opt(doc, "connectivity", "$", dict, {})
    model = _opt(conn_raw, "model", "$.connectivity", str, "static")
    if model not in MODELS:
        raise ScenarioError("$.connectivity.model", f"must be one of {MODELS}")
    edges_raw = conn_raw.get("edges", "full")
    if edges_raw == "full":
        edges = "full"
    elif isinstance(edges_raw, list):
        edges = []
        for j, e in enumerate(edges_raw):
            a, b = _pair(e, f"$.connectivity.edges[{j}]", str)
            node_ref(a, f"$.connectivity.edges[{j}][0]")
            node_ref(b, f"$.connectivity.edges[{j}][1]")
            edges.append((a, b))
    else:
        raise ScenarioError("$.connectivity.edges", "expected 'full' or a list of pairs")
    events = []
    for j, ev in enumerate(conn_raw.get("events", [])):
        loc = f"$.connectivity.events[{j}]"
        a, b = _pair(_req(ev, "edge", loc), f"{loc}.edge", str)
        node_ref(a, f"{loc}.edge[0]")
        node_ref(b, f"{loc}.edge[1]")
        events.append(ContactEvent(_req(ev, "time", loc, int), a, b, _req(ev, "up", loc, bool)))
    conn = Connectivity(
        model=model, edges=edges, events=sorted(events, key=lambda e: e.time),
        area=_pair(conn_raw.get("area", [100.0, 100.0]), "$.connectivity.area", (int, float)),
        speed=_pair(conn_raw.get("speed", [1.0, 5.0]), "$.connectivity.speed", (int, float)),
        pause=_pair(conn_raw.get("pause", [0, 2000]), "$.connectivity.pause"),
        radio_range=_opt(conn_raw, "range", "$.connectivity", (int, float), 30.0),
    )

    tasks = []
    for j, t in enumerate(_opt(doc, "tasks", "$", list, [])):
        loc = f"$.tasks[{j}]"
        inj = Injection(
            time=_req(t, "time", loc, int), issuer=node_ref(_req(t, "issuer", loc, str), f"{loc}.issuer"),
            expr=_req(t, "expr", loc, str), name=_opt(t, "name", loc, str, None),
            price=_opt(t, "price", loc, int, None), inputs=_opt(t, "inputs", loc, dict, {}),
            results=_opt(t, "results", loc, dict, {}),
        )
        try:
            parse_expression(inj.expr)
        except ValueError as exc:
            raise ScenarioError(f"{loc}.expr", str(exc)) from None
        if inj.name is not None:
            _check_name(inj.name, f"{loc}.name")
        tasks.append(inj)

    churn = []
    for j, c in enumerate(_opt(doc, "churn", "$", list, [])):
        loc = f"$.churn[{j}]"
        action = _req(c, "action", loc, str)
        if action not in CHURN_ACTIONS:
            raise ScenarioError(f"{loc}.action", f"must be one of {CHURN_ACTIONS}")
        churn.append(ChurnEvent(_req(c, "time", loc, int),
                                node_ref(_req(c, "node", loc, str), f"{loc}.node", action == "crash"),
                                action))

    actions = []
    for j, a in enumerate(_opt(doc, "actions", "$", list, [])):
        loc = f"$.actions[{j}]"
        kind = _req(a, "action", loc, str)
        if kind not in ACTIONS:
            raise ScenarioError(f"{loc}.action", f"must be one of {ACTIONS}")
        act = Action(_req(a, "time", loc, int), node_ref(_req(a, "node", loc, str), f"{loc}.node"),
                     kind, name=_opt(a, "name", loc, str, None), label=_opt(a, "label", loc, str, None),
                     value=_opt(a, "value", loc, str, ""), amount=_opt(a, "amount", loc, int, 0))
        if kind in ("verify", "forge", "append") and act.name is None:
            raise ScenarioError(f"{loc}.name", "required for this action")
        if act.name is not None:
            _check_name(act.name, f"{loc}.name")
        if kind == "append":
            _check_name(act.label or "", f"{loc}.label")
        actions.append(act)

    functions = _opt(doc, "functions", "$", dict, {})
    for k, v in functions.items():
        _check_name(k, f"$.functions.{k}")
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ScenarioError(f"$.functions.{k}", "cost must be a non-negative integer")

    sc = Scenario(
        nodes=nodes, duration=duration, seed=_opt(doc, "seed", "$", int, 0), mode=mode,
        protocol=_protocol(doc.get("protocol", {}), "$.protocol"), functions=functions,
        latency=latency, loss=float(loss), connectivity=conn, tasks=tasks, churn=churn,
        actions=actions, sample_period=_opt(doc, "sample_period", "$", int, 1000),
        initial_balance=_opt(doc, "initial_balance", "$", int, 1000),
        label=_opt(doc, "label", "$", str, ""),
    )
    if sc.sample_period <= 0:
        raise ScenarioError("$.sample_period", "must be > 0")
    for spec in nodes:
        try:
            sc.protocol_for(spec)
        except (ConfigError, TypeError, ValueError) as exc:
            raise ScenarioError(f"$.nodes[{ids.index(spec.id)}].protocol", str(exc)) from None
    return sc


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    except OSError as exc:
        raise ScenarioError(str(path), exc.strerror or str(exc)) from None
    return parse_scenario(doc)
