"""Deterministic discrete-event simulator for swarms of :class:`Node` objects.

Time is integer milliseconds. Every random draw comes from generators seeded
from the scenario seed, and events at equal times run in insertion order, so
a (scenario, seed) pair always produces the same trace bytes.
"""

from __future__ import annotations

import bisect
import hashlib
import heapq
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .crypto import ED25519, Scheme
from .economy import CoinLedger
from .executor import demo_table
from .log import Verdict, verify_chain
from .messages import Beacon, BeaconReply, LogUpdate, MessageType, TailQuery, TailResponse
from .naming import parse_name
from .scenario import TAKER, Connectivity, Scenario
from .swarm import InvalidSignature, Mode, Node


# -- connectivity -------------------------------------------------------------

class _Waypoints:
    """Random-waypoint trajectory of one node, generated lazily."""

    def __init__(self, conn: Connectivity, rng: random.Random):
        self.conn = conn
        self.rng = rng
        w, h = conn.area
        start = (rng.uniform(0, w), rng.uniform(0, h))
        # segments: (t0, t1, p0, p1)
        self.segments = [(0, 0, start, start)]

    def _extend(self) -> None:
        t0, t1, _, p = self.segments[-1]
        w, h = self.conn.area
        pause = self.rng.randint(*self.conn.pause)
        if pause:
            self.segments.append((t1, t1 + pause, p, p))
            t1 += pause
        dest = (self.rng.uniform(0, w), self.rng.uniform(0, h))
        speed = self.rng.uniform(*self.conn.speed)
        travel = max(1, int(math.dist(p, dest) / max(speed, 1e-9) * 1000))
        self.segments.append((t1, t1 + travel, p, dest))

    def position(self, t: int) -> tuple[float, float]:
        while self.segments[-1][1] < t:
            self._extend()
        for t0, t1, p0, p1 in reversed(self.segments):
            if t0 <= t:
                if t1 == t0:
                    return p1
                f = min(1.0, (t - t0) / (t1 - t0))
                return (p0[0] + (p1[0] - p0[0]) * f, p0[1] + (p1[1] - p0[1]) * f)
        return self.segments[0][2]


class ConnectivityModel:
    def __init__(self, conn: Connectivity, node_ids: list[str], seed: int):
        self.conn = conn
        self.ids = sorted(node_ids)
        if conn.edges == "full":
            base = {frozenset((a, b)) for i, a in enumerate(self.ids) for b in self.ids[i + 1:]}
        else:
            base = {frozenset(e) for e in conn.edges if e[0] != e[1]}
        self.base = base
        self._times: list[int] = []
        self._states: list[frozenset] = []
        if conn.model == "scripted":
            state = set(base)
            for ev in conn.events:
                edge = frozenset((ev.a, ev.b))
                state.add(edge) if ev.up else state.discard(edge)
                self._times.append(ev.time)
                self._states.append(frozenset(state))
        self._walkers = {}
        if conn.model == "waypoint":
            self._walkers = {i: _Waypoints(conn, random.Random(f"{seed}/waypoint/{i}"))
                             for i in self.ids}

    def edges_at(self, t: int) -> frozenset | set:
        if self.conn.model == "scripted":
            k = bisect.bisect_right(self._times, t)
            return self._states[k - 1] if k else self.base
        if self.conn.model == "waypoint":
            pos = {i: w.position(t) for i, w in self._walkers.items()}
            r = self.conn.radio_range
            return {frozenset((a, b)) for i, a in enumerate(self.ids) for b in self.ids[i + 1:]
                    if math.dist(pos[a], pos[b]) <= r}
        return self.base


def connectivity_at(model: ConnectivityModel, time: int, live: set[str]) -> dict[str, list[str]]:
    """Adjacency over live nodes at ``time``."""
    adj = {n: [] for n in sorted(live)}
    for edge in model.edges_at(time):
        a, b = sorted(edge)
        if a in live and b in live:
            adj[a].append(b)
            adj[b].append(a)
    for n in adj:
        adj[n].sort()
    return adj


# -- metrics & trace ----------------------------------------------------------

@dataclass
class TaskMetrics:
    name: str
    task: str
    injected_at: int
    first_taken: int | None = None
    completed_at: int | None = None
    replication: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class NodeMetrics:
    sent: dict[str, int] = field(default_factory=dict)
    received: dict[str, int] = field(default_factory=dict)
    bytes_sent: int = 0
    bytes_received: int = 0
    balance: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class Metrics:
    duration: int
    tasks: dict[str, TaskMetrics] = field(default_factory=dict)
    nodes: dict[str, NodeMetrics] = field(default_factory=dict)
    drops: dict[str, int] = field(default_factory=dict)
    census: dict[str, int] = field(default_factory=dict)
    purges: int = 0
    verdicts: list[dict] = field(default_factory=list)
    total_coins: list[tuple[int, int]] = field(default_factory=list)
    convergence: dict[str, dict] = field(default_factory=dict)

    @property
    def suspect_verdicts(self) -> int:
        return sum(1 for v in self.verdicts if v["verdict"] == "Suspect")

    def summary(self) -> dict:
        return {
            "duration": self.duration,
            "tasks": {k: {"name": v.name, "injected_at": v.injected_at, "first_taken": v.first_taken,
                          "completed_at": v.completed_at, "replication": v.replication}
                      for k, v in sorted(self.tasks.items())},
            "nodes": {k: {"sent": dict(sorted(v.sent.items())),
                          "received": dict(sorted(v.received.items())),
                          "bytes_sent": v.bytes_sent, "bytes_received": v.bytes_received,
                          "balance": v.balance}
                      for k, v in sorted(self.nodes.items())},
            "drops": dict(sorted(self.drops.items())),
            "census": dict(sorted(self.census.items())),
            "purges": self.purges,
            "verdicts": self.verdicts,
            "suspect_verdicts": self.suspect_verdicts,
            "total_coins": self.total_coins,
            "convergence": dict(sorted(self.convergence.items())),
        }


TRACE_KINDS = ("message-sent", "message-recv", "message-drop", "log-append", "task-taken",
               "task-completed", "task-dropped", "purge", "payment", "verdict")


def encode_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def decode_record(line: str) -> dict:
    return json.loads(line)


@dataclass
class SimResult:
    metrics: Metrics
    trace: list[str]
    nodes: dict[str, Node]
    ledger: CoinLedger | None

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.trace:
            h.update(line.encode("utf-8") + b"\n")
        return h.hexdigest()

    def records(self, kind: str | None = None) -> Iterator[dict]:
        for line in self.trace:
            r = json.loads(line)
            if kind is None or r["kind"] == kind:
                yield r


_MSG_NAMES = {
    MessageType.BEACON: "Beacon",
    MessageType.BEACON_REPLY: "BeaconReply",
    MessageType.LOG_UPDATE: "LogUpdate",
    MessageType.TAIL_QUERY: "TailQuery",
    MessageType.TAIL_RESPONSE: "TailResponse",
}


class Simulator:
    def __init__(self, scenario: Scenario, seed: int | None = None, duration: int | None = None,
                 scheme: Scheme = ED25519, sink: Callable[[str], None] | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.duration = scenario.duration if duration is None else duration
        self.scheme = scheme
        self.sink = sink
        self.trace: list[str] = []
        self.metrics = Metrics(self.duration)
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self.net_rng = random.Random(f"{self.seed}/network")
        self.conn = ConnectivityModel(scenario.connectivity, scenario.node_ids, self.seed)
        self.ledger = CoinLedger(scenario.initial_balance) if scenario.mode == "economy" else None
        self._link_clock: dict[tuple[str, str], int] = {}
        self._adj_key = None
        self._adj: dict[str, list[str]] = {}

        full = demo_table()
        if scenario.functions:
            full = full.with_costs({parse_name(k): v for k, v in scenario.functions.items()})
        self.nodes: dict[str, Node] = {}
        self.by_key: dict[bytes, str] = {}
        for spec in scenario.nodes:
            key = scheme.keypair(f"{self.seed}/{spec.id}".encode())
            cfg = scenario.protocol_for(spec)
            cfg.seed = self.seed
            table = full if spec.functions is None else full.subset([parse_name(f) for f in spec.functions])
            node = Node(spec.id, key, cfg, table, cost_table=full, ledger=self.ledger,
                        local_data={k: v.encode("utf-8") for k, v in spec.data.items()},
                        rng=random.Random(f"{self.seed}/{spec.id}/rng"))
            self.nodes[spec.id] = node
            self.by_key[key.public_key] = spec.id
            self.metrics.nodes[spec.id] = NodeMetrics()
            if self.ledger is not None:
                self.ledger.open_account(key.public_key, spec.coins)
        self.alive: set[str] = set()
        self.departed: set[str] = set()
        self._pair_names: dict[int, str] = {}

    # -- plumbing ---------------------------------------------------------------

    def _push(self, time: int, kind: str, target: str | None, payload=None) -> None:
        if time < self.now:
            raise AssertionError("causality violation")
        heapq.heappush(self._queue, (time, self._seq, kind, target, payload))
        self._seq += 1

    def _record(self, node: str | None, kind: str, **fields) -> None:
        rec = {"t": self.now, "node": node, "kind": kind, **fields}
        line = encode_record(rec)
        self.trace.append(line)
        if self.sink is not None:
            self.sink(line)

    def _drop(self, reason: str, src: str, dst: str, msg) -> None:
        self.metrics.drops[reason] = self.metrics.drops.get(reason, 0) + 1
        self._record(src, "message-drop", to=dst, type=_MSG_NAMES[msg.type], reason=reason)

    def neighbors(self, node_id: str) -> list[str]:
        key = (self.now, frozenset(self.alive))
        if self._adj_key != key:
            self._adj = connectivity_at(self.conn, self.now, self.alive)
            self._adj_key = key
        return self._adj.get(node_id, [])

    def _send(self, src: str, dst: str, msg) -> None:
        tname = _MSG_NAMES[msg.type]
        size = len(msg.encode())
        m = self.metrics.nodes[src]
        m.sent[tname] = m.sent.get(tname, 0) + 1
        m.bytes_sent += size
        self.metrics.census[tname] = self.metrics.census.get(tname, 0) + 1
        self._record(src, "message-sent", to=dst, type=tname, bytes=size)
        if dst not in self.alive or dst not in self.neighbors(src):
            self._drop("no-link", src, dst, msg)
            return
        if self.scenario.loss and self.net_rng.random() < self.scenario.loss:
            self._drop("loss", src, dst, msg)
            return
        lo, hi = self.scenario.latency
        at = self.now + self.net_rng.randint(lo, hi)
        at = max(at, self._link_clock.get((src, dst), 0))
        self._link_clock[(src, dst)] = at
        self._push(at, "deliver", dst, (src, msg, size))

    def _drain(self, node_id: str) -> None:
        node = self.nodes[node_id]
        while node.events or node.outbox or node.timers:
            events, node.events = node.events, []
            for ev in events:
                self._on_node_event(node_id, ev)
            outbox, node.outbox = node.outbox, []
            for dest, msg in outbox:
                if dest is None:
                    for peer in self.neighbors(node_id):
                        self._send(node_id, peer, msg)
                else:
                    peer = self.by_key.get(dest)
                    if peer is not None:
                        self._send(node_id, peer, msg)
            timers, node.timers = node.timers, []
            for at, method, args in timers:
                self._push(max(at, self.now), "call", node_id, (method, args))

    def _on_node_event(self, node_id: str, ev: dict) -> None:
        kind = ev["kind"]
        fields = {k: v for k, v in ev.items() if k != "kind"}
        self._record(node_id, kind, **fields)
        if kind == "task-offered":
            self.metrics.tasks[f"{ev['name']}#{ev['task']}"] = TaskMetrics(ev["name"], ev["task"], self.now)
        elif kind == "swarm-completed":
            for tm in self.metrics.tasks.values():
                if tm.name == ev["name"] and tm.completed_at is None:
                    tm.completed_at = self.now
        elif kind == "task-taken":
            tm = self.metrics.tasks.get(f"{ev['name']}#{ev['task']}")
            if tm is not None:
                if tm.first_taken is None:
                    tm.first_taken = self.now
                level = tm.replication[-1][1] + 1 if tm.replication else 1
                tm.replication.append((self.now, level))
        elif kind == "task-completed":
            tm = self.metrics.tasks.get(f"{ev['name']}#{ev['task']}")
            if tm is not None and tm.completed_at is None:
                tm.completed_at = self.now
        elif kind == "purge":
            self.metrics.purges += 1
        elif kind == "verdict":
            self.metrics.verdicts.append({"t": self.now, "node": node_id, **fields})

    # -- lifecycle ----------------------------------------------------------------

    def _start_node(self, node_id: str) -> None:
        if node_id in self.alive or node_id in self.departed:
            return
        self.alive.add(node_id)
        node = self.nodes[node_id]
        cfg = node.config
        rng = node.rng
        self._record(node_id, "churn", action="join")
        periodic = [("beacon", cfg.beacon_period), ("work", cfg.work_period),
                    ("keepalive", cfg.keepalive_period), ("detect", cfg.beacon_period),
                    ("purge", cfg.beacon_period)]
        if cfg.mode == Mode.ECONOMY:
            periodic += [("offer", cfg.offer_window), ("cache", cfg.cache_window)]
        for what, period in periodic:
            self._push(self.now + rng.randrange(period), "tick", node_id, (what, period))

    def _stop_node(self, node_id: str, graceful: bool) -> None:
        if node_id not in self.alive:
            return
        if graceful:
            self.nodes[node_id].flush(self.now)
            self._drain(node_id)
        self.alive.discard(node_id)
        self.departed.add(node_id)
        self._record(node_id, "churn", action="leave" if graceful else "crash")

    def _tick(self, node_id: str, what: str, period: int) -> None:
        node = self.nodes[node_id]
        if what == "beacon":
            node.outbox.append((None, node.make_beacon(self.now)))
        elif what == "work":
            node.work(self.now)
        elif what == "keepalive":
            node.emit_keepalive(self.now)
        elif what == "detect":
            node.detect_failures(self.now)
        elif what == "purge":
            node.ttl_round(self.now)
        elif what == "offer":
            node.offer_round(self.now)
        elif what == "cache":
            node.cache_round(self.now)
        self._push(self.now + period, "tick", node_id, (what, period))

    def _deliver(self, node_id: str, src: str, msg, size: int) -> None:
        node = self.nodes[node_id]
        tname = _MSG_NAMES[msg.type]
        m = self.metrics.nodes[node_id]
        m.received[tname] = m.received.get(tname, 0) + 1
        m.bytes_received += size
        self._record(node_id, "message-recv", frm=src, type=tname, bytes=size)
        if isinstance(msg, Beacon):
            try:
                reply = node.handle_beacon(msg, self.now)
            except InvalidSignature:
                return
            if reply is not None:
                node.outbox.append((msg.sender, reply))
        elif isinstance(msg, BeaconReply):
            node.handle_beacon_reply(msg, self.now)
        elif isinstance(msg, LogUpdate):
            node.handle_log_update(msg, self.now)
        elif isinstance(msg, TailQuery):
            node.handle_tail_query(msg, self.now)
        elif isinstance(msg, TailResponse):
            node.handle_tail_response(msg, self.now)

    def _inject(self, idx: int) -> None:
        inj = self.scenario.tasks[idx]
        if inj.issuer not in self.alive:
            self._record(inj.issuer, "inject-skipped", index=idx)
            return
        node = self.nodes[inj.issuer]
        name = parse_name(inj.name or f"/swarm/{inj.issuer}/{idx}")
        if name in node.store:
            self._record(inj.issuer, "inject-skipped", index=idx, reason="duplicate name")
            return
        enc = lambda d: {k: v.encode("utf-8") for k, v in d.items()}
        node.inject(name, inj.expr, self.now, price=inj.price, inputs=enc(inj.inputs),
                    results=enc(inj.results))

    def _action(self, idx: int) -> None:
        act = self.scenario.actions[idx]
        if act.node not in self.alive:
            self._record(act.node, "action-skipped", action=act.action)
            return
        node = self.nodes[act.node]
        name = parse_name(act.name) if act.name else None
        if act.action == "verify":
            node.start_verification(name, self.now)
        elif act.action == "forge":
            node.forge(name, self.now)
        elif act.action == "append":
            if name in node.store and node.store.pairs[name].request_log is not None:
                node.append_note(name, act.label, act.value.encode("utf-8"), self.now)
            else:
                self._record(act.node, "action-skipped", action="append")
        elif act.action == "credit" and self.ledger is not None:
            self.ledger.credit_external(node.key.public_key, act.amount)
            self._record(act.node, "credit", amount=act.amount)

    def _churn(self, idx: int) -> None:
        ev = self.scenario.churn[idx]
        target = ev.node
        if target == TAKER:
            busy = sorted(n for n in self.alive if self.nodes[n].in_progress)
            if not busy:
                self._record(None, "churn-skipped", action=ev.action)
                return
            target = busy[0]
        if ev.action == "join":
            self._start_node(target)
        else:
            self._stop_node(target, graceful=ev.action == "leave")

    def _sample(self) -> None:
        if self.ledger is not None:
            total = self.ledger.total()
            self.metrics.total_coins.append((self.now, total))
            balances = {}
            for nid, node in self.nodes.items():
                b = self.ledger.balance(node.key.public_key)
                self.metrics.nodes[nid].balance.append((self.now, b))
                balances[nid] = b
            self._record(None, "sample", total=total, balances=balances)
        self._push(self.now + self.scenario.sample_period, "sample", None)

    # -- main loop ----------------------------------------------------------------

    def run(self) -> SimResult:
        sc = self.scenario
        for spec in sc.nodes:
            self._push(spec.join_at, "start", spec.id)
        for i, inj in enumerate(sc.tasks):
            self._push(inj.time, "inject", inj.issuer, i)
        for i, ev in enumerate(sc.churn):
            self._push(ev.time, "churn", ev.node, i)
        for i, act in enumerate(sc.actions):
            self._push(act.time, "action", act.node, i)
        self._push(0, "sample", None)

        while self._queue and self._queue[0][0] <= self.duration:
            time, _, kind, target, payload = heapq.heappop(self._queue)
            self.now = time
            if kind == "start":
                self._start_node(target)
                continue
            if kind == "sample":
                self._sample()
                continue
            if kind == "churn":
                self._churn(payload)
                for n in sorted(self.alive):
                    self._drain(n)
                continue
            if target not in self.alive:
                if kind == "deliver":
                    src, msg, _ = payload
                    self._drop("dead", src, target, msg)
                continue
            if kind == "tick":
                self._tick(target, *payload)
            elif kind == "deliver":
                self._deliver(target, *payload)
            elif kind == "call":
                method, args = payload
                getattr(self.nodes[target], method)(*args, self.now)
            elif kind == "inject":
                self._inject(payload)
            elif kind == "action":
                self._action(payload)
            self._drain(target)

        self.now = self.duration
        self._check_convergence()
        self._record(None, "summary", metrics=self.metrics.summary())
        return SimResult(self.metrics, self.trace, self.nodes, self.ledger)

    def _check_convergence(self) -> None:
        names = sorted({str(n) for nid in self.alive for n in self.nodes[nid].store.pairs})
        for text in names:
            name = parse_name(text)
            holders = [self.nodes[n] for n in sorted(self.alive) if name in self.nodes[n].store]
            reqs = {tuple(e.encode() for e in p.request_log)
                    for p in (h.store.pairs[name] for h in holders) if p.request_log is not None}
            ress = {tuple(e.encode() for e in p.result_log)
                    for p in (h.store.pairs[name] for h in holders) if p.result_log is not None}
            verdicts = []
            for h in holders:
                p = h.store.pairs[name]
                for log in (p.request_log, p.result_log):
                    if log is not None:
                        verdicts.append(verify_chain(log).verdict.value)
            self.metrics.convergence[text] = {
                "holders": len(holders),
                "converged": len(reqs) <= 1 and len(ress) <= 1,
                "all_valid": all(v == Verdict.VALID.value for v in verdicts),
                "last_change": max(h.last_change.get(name, 0) for h in holders),
            }


def run(scenario: Scenario, seed: int | None = None, duration: int | None = None,
        scheme: Scheme = ED25519) -> SimResult:
    return Simulator(scenario, seed=seed, duration=duration, scheme=scheme).run()
