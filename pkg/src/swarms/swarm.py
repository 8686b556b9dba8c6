"""Per-node protocol state machine.

A :class:`Node` never talks to a network or a clock directly. Handlers take
the current simulated time and leave their side effects in three lists that
the driver drains after every call:

``outbox``  ``(destination public key or None for broadcast, message)``
``timers``  ``(fire time, method name, args)``
``events``  trace records ``{"kind": ..., ...}``
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Mapping

from . import economy as eco
from .crypto import ZERO_DIGEST, KeyPair
from .executor import (
    ExecutionError,
    FunctionTable,
    cost_of,
    evaluate,
    missing_inputs,
    remaining_cost,
)
from .log import (
    AnchorMismatch,
    EntryKind,
    Log,
    LogEntry,
    Verdict,
    append,
    create_log,
    earliest_append_time,
    entries_after,
    log_from_entries,
    merge,
    rechain_with_changes,
    verify_chain,
)
from .logstore import (
    LogPair,
    LogStore,
    PairStatus,
    list_names,
    mark_completed,
    mark_replicated,
    purge_expired,
    purge_request_log,
    remove_pair,
)
from .messages import (
    Beacon,
    BeaconReply,
    KnownTails,
    LogUpdate,
    TailQuery,
    TailResponse,
    WhichLog,
)
from .naming import Call, DataRef, Expression, Name, decompose, iter_data_refs, parse_expression
from .payloads import (
    decode_data,
    decode_request,
    decode_task_ref,
    encode_data,
    encode_request,
    encode_task_ref,
)


class Mode(enum.Enum):
    TTL = "ttl"
    ECONOMY = "economy"


class ConfigError(ValueError):
    pass


@dataclass
class ProtocolConfig:
    beacon_period: int = 1000
    max_names: int = 8
    replication_target: int = 2
    keepalive_period: int = 5000
    keepalive_miss_threshold: int = 3
    takeover_delay_max: int = 10_000
    work_period: int = 1000
    capacity: int = 4
    exec_ms_per_unit: int = 100
    resync_period: int = 5000
    verify_quorum: int = 3
    verify_timeout: int = 500
    interest_prefixes: tuple[Name, ...] = ()
    trust_replication: bool = False
    auto_purge: bool = True
    mode: Mode = Mode.TTL
    ttl_initial: int = 60_000
    ttl_max: int = 3_600_000
    min_price: int = 0
    offer_window: int | None = None  # default 2 * beacon_period
    offer_up: float = eco.OFFER_UP
    offer_down: float = eco.OFFER_DOWN
    cache_window: int = 5000
    cache_fraction: float = 0.5
    cache_up: float = eco.CACHE_UP
    cache_down: float = eco.CACHE_DOWN
    cache_prune_threshold: int = 1
    seed: int = 0

    def __post_init__(self):
        for f in ("beacon_period", "keepalive_period", "work_period", "resync_period",
                  "verify_timeout", "cache_window", "exec_ms_per_unit"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"{f} must be > 0")
        if self.replication_target < 1:
            raise ConfigError("replication_target must be >= 1")
        if self.keepalive_miss_threshold < 2:
            raise ConfigError("keepalive_miss_threshold must be >= 2")
        if self.takeover_delay_max < 0 or self.max_names < 0 or self.capacity < 1:
            raise ConfigError("takeover_delay_max, max_names must be >= 0 and capacity >= 1")
        if self.offer_window is None:
            self.offer_window = 2 * self.beacon_period
        self.mode = Mode(self.mode)

    @property
    def link_timeout(self) -> int:
        return 3 * self.beacon_period

    @property
    def failure_timeout(self) -> int:
        return self.keepalive_miss_threshold * self.keepalive_period


class InvalidSignature(Exception):
    pass


class NoPeers(Exception):
    pass


class VerificationVerdict(enum.Enum):
    CONFIRMED = "Confirmed"
    SUSPECT = "Suspect"


# -- task views ---------------------------------------------------------------

@dataclass
class Task:
    id: str
    expr: Expression
    expr_text: str
    issuer: bytes
    offered_at: int
    offers: list[tuple[int, int]] = field(default_factory=list)  # (timestamp, price)
    taken_at: dict[bytes, int] = field(default_factory=dict)
    last_keepalive: dict[bytes, int] = field(default_factory=dict)
    result_authors: list[bytes] = field(default_factory=list)

    @property
    def offered_price(self) -> int | None:
        return self.offers[-1][1] if self.offers else None

    @property
    def takers(self) -> frozenset[bytes]:
        return frozenset(self.taken_at)

    @property
    def results(self) -> int:
        return len(self.result_authors)

    def price_at(self, timestamp: int) -> int | None:
        price = None
        for ts, p in self.offers:
            if ts <= timestamp:
                price = p
        return price

    def last_heard(self, taker: bytes) -> int:
        return max(self.taken_at[taker], self.last_keepalive.get(taker, -1))

    def live_takers(self, now: int, timeout: int) -> frozenset[bytes]:
        return frozenset(k for k in self.taken_at if now - self.last_heard(k) <= timeout)


class PairResolver:
    """Looks up data objects in a log pair: result-log first, then request-log inputs."""

    def __init__(self, pair: LogPair):
        self.results: dict[str, bytes] = {}
        self.inputs: dict[str, bytes] = {}
        if pair.result_log is not None:
            for e in pair.result_log.entries[1:]:
                if e.kind == EntryKind.DATA:
                    label, value = decode_data(e.payload)
                    self.results.setdefault(label, value)
        if pair.request_log is not None:
            for e in pair.request_log.entries:
                if e.kind == EntryKind.DATA:
                    label, value = decode_data(e.payload)
                    self.inputs.setdefault(label, value)

    def result_for(self, expr_text: str) -> bytes | None:
        return self.results.get(expr_text)

    def input_for(self, name_text: str) -> bytes | None:
        return self.inputs.get(name_text)


def task_views(pair: LogPair) -> dict[str, Task]:
    """Derive every task's state from the log contents alone."""
    tasks: dict[str, Task] = {}
    by_expr: dict[str, Task] = {}
    if pair.request_log is None:
        return tasks
    for e in pair.request_log.entries:
        if e.kind == EntryKind.REQUEST:
            text, price = decode_request(e.payload)
            t = by_expr.get(text)
            if t is None:
                try:
                    expr = parse_expression(text)
                except ValueError:
                    continue
                t = Task(e.digest.hex(), expr, text, pair.request_log.anchor.author, e.timestamp)
                by_expr[text] = t
                tasks[t.id] = t
            if price is not None and e.author == t.issuer:
                t.offers.append((e.timestamp, price))
        elif e.kind in (EntryKind.TAKE_OVER, EntryKind.KEEP_ALIVE):
            t = tasks.get(decode_task_ref(e.payload))
            if t is None:
                continue
            if e.kind == EntryKind.TAKE_OVER:
                t.taken_at.setdefault(e.author, e.timestamp)
            elif e.author in t.taken_at:
                t.last_keepalive[e.author] = max(t.last_keepalive.get(e.author, -1), e.timestamp)
    if pair.result_log is not None:
        for e in pair.result_log.entries[1:]:
            if e.kind == EntryKind.DATA:
                t = by_expr.get(decode_data(e.payload)[0])
                if t is not None:
                    t.result_authors.append(e.author)
    return tasks


def is_complete(pair: LogPair) -> bool:
    views = task_views(pair)
    return bool(views) and pair.result_log is not None and all(t.results for t in views.values())


def verify_result(node: "Node", name: Name, peer_heads: Mapping[bytes, bytes | None]) -> VerificationVerdict:
    """Confirmed iff the local result chain is Valid and every queried peer's head matches."""
    if not peer_heads:
        raise NoPeers(str(name))
    pair = node.store.pairs.get(name)
    if pair is None or pair.result_log is None:
        return VerificationVerdict.SUSPECT
    if verify_chain(pair.result_log).verdict != Verdict.VALID:
        return VerificationVerdict.SUSPECT
    head = pair.result_log.head_digest()
    if all(h == head for h in peer_heads.values()):
        return VerificationVerdict.CONFIRMED
    return VerificationVerdict.SUSPECT


@dataclass
class _Issued:
    local_costs: dict[str, int] = field(default_factory=dict)
    takers_seen: dict[str, int] = field(default_factory=dict)
    last_round: dict[str, int] = field(default_factory=dict)


@dataclass
class _Verification:
    name: Name
    peers: tuple[bytes, ...]
    responses: dict[bytes, bytes | None] = field(default_factory=dict)


class Node:
    def __init__(self, node_id: str, key: KeyPair, config: ProtocolConfig | None = None,
                 table: FunctionTable | None = None, *, cost_table: FunctionTable | None = None,
                 ledger: eco.CoinLedger | None = None, local_data: Mapping[str, bytes] | None = None,
                 rng: random.Random | None = None):
        self.id = node_id
        self.key = key
        self.config = config or ProtocolConfig()
        self.table = table or FunctionTable()
        self.cost_table = cost_table or self.table
        self.ledger = ledger
        self.local_data = dict(local_data or {})
        self.rng = rng or random.Random(self.config.seed)
        self.store = LogStore(self.config.ttl_initial, self.config.ttl_max)

        self.subscribers: dict[Name, set[bytes]] = {}
        self.peer_seen: dict[bytes, int] = {}
        self.last_resync: dict[bytes, int] = {}
        self.advertised: dict[bytes, set[Name]] = {}
        self.in_progress: dict[tuple[Name, str], int] = {}
        self.scheduled_takeovers: set[tuple[Name, str]] = set()
        self.forgotten: set[Name] = set()
        self.declined: set[Name] = set()
        self.last_change: dict[Name, int] = {}
        self.request_purged: set[Name] = set()
        self.final_results: dict[Name, bytes] = {}

        self.issued: dict[Name, _Issued] = {}
        self.reference_price: int | None = None
        self.paid_for: dict[Name, int] = {}
        self.cache_prices: dict[Name, eco.CachePrice] = {}
        self.cache_sales: dict[Name, int] = {}
        self._ledger_cursor = 0

        self.verifications: dict[int, _Verification] = {}
        self._nonce = 0

        self.outbox: list[tuple[bytes | None, object]] = []
        self.timers: list[tuple[int, str, tuple]] = []
        self.events: list[dict] = []
        self.counters: dict[str, int] = {}

        self._views: dict[Name, tuple[int, dict[str, Task], PairResolver]] = {}
        self._versions: dict[Name, int] = {}

    def __repr__(self) -> str:
        return f"Node({self.id}, {self.key.short})"

    # -- helpers -----------------------------------------------------------------

    def _count(self, what: str, n: int = 1) -> None:
        self.counters[what] = self.counters.get(what, 0) + n

    def _event(self, kind: str, **fields) -> None:
        self.events.append({"kind": kind, **fields})

    def _touch(self, name: Name, now: int) -> None:
        self._versions[name] = self._versions.get(name, 0) + 1
        self.last_change[name] = now

    def views(self, name: Name) -> dict[str, Task]:
        return self._view_state(name)[1]

    def resolver(self, name: Name) -> PairResolver:
        return self._view_state(name)[2]

    def _view_state(self, name: Name):
        version = self._versions.get(name, 0)
        cached = self._views.get(name)
        if cached is None or cached[0] != version:
            pair = self.store.pairs[name]
            cached = (version, task_views(pair), PairResolver(pair))
            self._views[name] = cached
        return cached

    def _linked(self, peer: bytes, now: int) -> bool:
        seen = self.peer_seen.get(peer)
        return seen is not None and now - seen <= self.config.link_timeout

    def _interested(self, name: Name) -> bool:
        prefixes = self.config.interest_prefixes
        return not prefixes or any(p.is_prefix_of(name) for p in prefixes)

    def _append(self, name: Name, which: WhichLog, kind: EntryKind, payload: bytes,
                now: int) -> LogEntry:
        pair = self.store.pairs[name]
        log = pair.request_log if which == WhichLog.REQUEST else pair.result_log
        ts = earliest_append_time(log, self.key.public_key, now)
        entry = append(log, kind, payload, self.key, ts)
        self._touch(name, now)
        self._event("log-append", name=str(name), log=which.name.lower(), entry_kind=kind.name,
                    seq=entry.author_seq, ts=entry.timestamp)
        return entry

    def _publish(self, name: Name, which: WhichLog, entries, now: int,
                 exclude: bytes | None = None) -> None:
        if not entries:
            return
        for peer in sorted(self.subscribers.get(name, ())):
            if peer != exclude and self._linked(peer, now):
                self.outbox.append((peer, LogUpdate(self.key.public_key, name, which, tuple(entries))))

    def _local_cost(self, expr: Expression) -> int | None:
        try:
            return cost_of(self.cost_table, expr)
        except ExecutionError:
            return None

    # -- issuing -----------------------------------------------------------------

    def inject(self, name: Name, expr_text: str, now: int, *, price: int | None = None,
               inputs: Mapping[str, bytes] | None = None,
               results: Mapping[str, bytes] | None = None) -> LogPair:
        """Start a swarm: anchor both logs, post sub-task requests and inputs."""
        root = parse_expression(expr_text)
        root_text = str(root) if isinstance(root, Call) else str(root.name)
        economy = self.config.mode == Mode.ECONOMY
        issued = _Issued()

        def offer_for(expr: Expression, text: str) -> int | None:
            if not economy or isinstance(expr, DataRef):
                return None
            lc = self._local_cost(expr)
            if lc is None or eco.offer_cap(lc) < 1:
                return None
            issued.local_costs[text] = lc
            base = price if price is not None else (self.reference_price or 1)
            return max(1, min(base, eco.offer_cap(lc)))

        req = create_log(name, self.key, encode_request(root_text, offer_for(root, root_text)), now)
        res = create_log(name, self.key, encode_data(str(name), root_text.encode("utf-8")), now,
                         result=True)
        pair = self.store.new_pair(name, req, res, now)
        self.subscribers.setdefault(name, set())
        self._touch(name, now)
        self._event("log-append", name=str(name), log="request", entry_kind="REQUEST", seq=0, ts=now)
        self._event("log-append", name=str(name), log="result", entry_kind="DATA", seq=0, ts=now)
        seen = {root_text}
        for call in decompose(root).subtasks:
            text = str(call)
            if text in seen:
                continue
            seen.add(text)
            self._append(name, WhichLog.REQUEST, EntryKind.REQUEST,
                         encode_request(text, offer_for(call, text)), now)
        provided = dict(self.local_data)
        provided.update(inputs or {})
        written = set()
        for ref in iter_data_refs(root):
            label = str(ref.name)
            if label in provided and label not in written and ref is not root:
                written.add(label)
                self._append(name, WhichLog.REQUEST, EntryKind.DATA,
                             encode_data(label, provided[label]), now)
        for label, value in sorted((results or {}).items()):
            self._append(name, WhichLog.RESULT, EntryKind.DATA, encode_data(label, value), now)
        if isinstance(root, DataRef) and root_text in self.local_data:
            self._append(name, WhichLog.RESULT, EntryKind.DATA,
                         encode_data(root_text, self.local_data[root_text]), now)
        if economy:
            self.issued[name] = issued
            for t in self.views(name).values():
                if t.offered_price is not None:
                    self._event("offer", name=str(name), task=t.id, price=t.offered_price,
                                local_cost=issued.local_costs[t.expr_text])
        self._event("inject", name=str(name), expr=root_text)
        for t in self.views(name).values():
            self._event("task-offered", name=str(name), task=t.id, expr=t.expr_text)
        self._after_change(name, now)
        return pair

    def provide_input(self, name: Name, label: str, value: bytes, now: int) -> LogEntry:
        entry = self._append(name, WhichLog.REQUEST, EntryKind.DATA, encode_data(label, value), now)
        self._publish(name, WhichLog.REQUEST, [entry], now)
        self._after_change(name, now)
        return entry

    def append_note(self, name: Name, label: str, value: bytes, now: int) -> LogEntry:
        """Free-form Data entry in the request-log (scenario-scripted appends)."""
        return self.provide_input(name, label, value, now)

    # -- discovery ---------------------------------------------------------------

    def make_beacon(self, now: int, full: bool = False) -> Beacon:
        limit = len(self.store) if full else self.config.max_names
        names, truncated, total = list_names(self.store, limit)
        return Beacon(self.key.public_key, total, truncated, tuple(names)).signed_by(self.key)

    def handle_beacon(self, beacon: Beacon, now: int) -> BeaconReply | None:
        if not beacon.verify(self.key.scheme):
            self._count("invalid_beacons")
            raise InvalidSignature(beacon.sender.hex())
        peer = beacon.sender
        if peer == self.key.public_key:
            return None
        prev = self.peer_seen.get(peer)
        self.peer_seen[peer] = now
        if beacon.truncated:
            self.advertised.setdefault(peer, set()).update(beacon.names)
        else:
            self.advertised[peer] = set(beacon.names)
        fresh = prev is None or now - prev > self.config.link_timeout
        resync = fresh or now - self.last_resync.get(peer, -10**18) >= self.config.resync_period
        wanted = []
        for name in beacon.names:
            if not self._interested(name) or name in self.forgotten or name in self.declined:
                continue
            pair = self.store.pairs.get(name)
            if pair is None:
                wanted.append((name, KnownTails(ZERO_DIGEST, ZERO_DIGEST)))
            elif resync:
                req = None
                if pair.request_log is not None:
                    req = pair.request_log.head_digest()
                elif name not in self.request_purged:
                    req = ZERO_DIGEST
                res = pair.result_log.head_digest() if pair.result_log is not None else ZERO_DIGEST
                wanted.append((name, KnownTails(req, res)))
        want_full = beacon.truncated and resync
        if not wanted and not want_full:
            return None
        if resync:
            self.last_resync[peer] = now
        for name, _ in wanted:
            if name in self.store:
                self.subscribers.setdefault(name, set()).add(peer)
        return BeaconReply(self.key.public_key, tuple(wanted), want_full)

    def handle_beacon_reply(self, reply: BeaconReply, now: int) -> list[LogUpdate]:
        updates = []
        peer = reply.sender
        self.peer_seen.setdefault(peer, now)
        for name, tails in reply.requested:
            pair = self.store.pairs.get(name)
            if pair is None:
                self._count("unknown_names")
                continue
            subs = self.subscribers.setdefault(name, set())
            if peer not in subs:
                subs.add(peer)
                mark_replicated(self.store, name, now)
            if tails.request is not None and pair.request_log is not None:
                delta = entries_after(pair.request_log, tails.request)
                if delta:
                    updates.append(LogUpdate(self.key.public_key, name, WhichLog.REQUEST, tuple(delta)))
            if pair.result_log is not None:
                delta = entries_after(pair.result_log, tails.result)
                if delta:
                    cp = self.cache_prices.get(name)
                    price = cp.price if cp is not None and tails.result == ZERO_DIGEST else None
                    updates.append(LogUpdate(self.key.public_key, name, WhichLog.RESULT,
                                             tuple(delta), price))
        for u in updates:
            self.outbox.append((peer, u))
        if reply.want_full_list:
            self.outbox.append((peer, self.make_beacon(now, full=True)))
        return updates

    # -- synchronisation -----------------------------------------------------------

    def handle_log_update(self, update: LogUpdate, now: int) -> None:
        name = update.name
        if name in self.forgotten or name in self.declined or not self._interested(name):
            self._count("ignored_updates")
            return
        pair = self.store.pairs.get(name)
        if pair is None and update.price is not None and not self._buy_cached(update, now):
            return
        old = None
        try:
            if pair is None:
                log = log_from_entries(name, update.entries, result=update.which == WhichLog.RESULT,
                                       scheme=self.key.scheme)
                if update.which == WhichLog.REQUEST:
                    pair = self.store.new_pair(name, log, None, now)
                else:
                    pair = self.store.new_pair(name, None, log, now)
                self.subscribers.setdefault(name, set())
                delta = list(log.entries)
                self._event("join", name=str(name))
            else:
                old = pair.request_log if update.which == WhichLog.REQUEST else pair.result_log
                if old is None:
                    if update.which == WhichLog.REQUEST and name in self.request_purged:
                        self._count("ignored_updates")
                        return
                    log = log_from_entries(name, update.entries,
                                           result=update.which == WhichLog.RESULT,
                                           scheme=self.key.scheme)
                    delta = list(log.entries)
                else:
                    result = merge(old, update.entries)
                    if result.rejected:
                        self._count("rejected_entries", len(result.rejected))
                    log = result.log
                    if log is old:
                        delta = []
                    else:
                        before = {e.encode() for e in old.entries}
                        delta = [e for e in log.entries if e.encode() not in before]
        except AnchorMismatch:
            self._count("anchor_mismatch")
            return
        self.subscribers.setdefault(name, set()).add(update.sender)
        if not delta:
            return
        log, mine = rechain_with_changes(log, self.key)
        if update.which == WhichLog.REQUEST:
            pair.request_log = log
            if pair.status == PairStatus.CACHED_ONLY:
                pair.status = PairStatus.ACTIVE
        else:
            pair.result_log = log
        self._touch(name, now)
        if mine:
            self._count("rechained", len(mine))
            self._event("rechain", name=str(name), log=update.which.name.lower(), entries=len(mine))
        self._publish(name, update.which, delta, now, exclude=update.sender)
        self._publish(name, update.which, mine, now)
        self._after_change(name, now)

    def _buy_cached(self, update: LogUpdate, now: int) -> bool:
        lc = None
        for e in update.entries:
            if e.author_seq == 0 and e.kind == EntryKind.DATA:
                try:
                    lc = self._local_cost(parse_expression(decode_data(e.payload)[1].decode("utf-8")))
                except (ValueError, UnicodeDecodeError):
                    lc = None
        decision = eco.Decision.COMPUTE_LOCALLY if lc is None else eco.buy_decision(lc, update.price)
        ok = decision == eco.Decision.BUY
        if ok:
            try:
                eco.transfer(self.ledger, self.key.public_key, update.sender, update.price,
                             time=now, memo=f"cache:{update.name}")
            except eco.InsufficientFunds:
                ok = False
        self._event("decision", name=str(update.name), context="cache", network_price=update.price,
                    local_cost=lc, decision=decision.value, bought=ok)
        if ok:
            self.paid_for[update.name] = self.paid_for.get(update.name, 0) + update.price
            self._event("payment", payer=self.key.public_key.hex(), payee=update.sender.hex(),
                        amount=update.price, memo=f"cache:{update.name}")
        else:
            self.declined.add(update.name)
        return ok

    def _after_change(self, name: Name, now: int) -> None:
        pair = self.store.pairs.get(name)
        if pair is None or pair.request_log is None or pair.result_log is None:
            return
        views = self.views(name)
        for key in [k for k in self.in_progress if k[0] == name]:
            t = views.get(key[1])
            if t is not None and t.results:
                del self.in_progress[key]
                self._event("task-dropped", name=str(name), task=key[1], reason="result-known")
        if pair.status == PairStatus.ACTIVE and views and all(t.results for t in views.values()):
            mark_completed(self.store, name, now)
            root = views[next(iter(views))]
            if root.issuer == self.key.public_key:
                value = self.resolver(name).result_for(root.expr_text)
                self.final_results[name] = value
            self._event("swarm-completed", name=str(name))
            if self.config.auto_purge:
                self.purge_requests(name, now)

    def purge_requests(self, name: Name, now: int) -> None:
        if self.ledger is not None:
            memos = {f"task:{tid}" for tid in self.views(name)}
            spent = sum(p.amount for p in self.ledger.payments
                        if p.payer == self.key.public_key and p.memo in memos)
            self.paid_for[name] = self.paid_for.get(name, 0) + spent
        purge_request_log(self.store, name)
        self.request_purged.add(name)
        self._touch(name, now)
        self._event("purge", name=str(name), what="request-log")
        if self.config.mode == Mode.ECONOMY:
            paid = self.paid_for.get(name, 0)
            self.cache_prices[name] = eco.CachePrice(
                name, eco.initial_cache_price(paid, self.config.cache_fraction),
                self.config.cache_prune_threshold)
            self.cache_sales.setdefault(name, 0)

    # -- tasks -------------------------------------------------------------------

    def _cache_hit(self, expr_text: str, exclude: Name) -> tuple[Name, bytes] | None:
        for other in self.store.names():
            if other == exclude or self.store.pairs[other].result_log is None:
                continue
            value = self.resolver(other).result_for(expr_text)
            if value is not None:
                return other, value
        return None

    def _can_do(self, name: Name, t: Task) -> bool:
        if self._cache_hit(t.expr_text, name) is not None:
            return True
        if isinstance(t.expr, DataRef):
            return t.expr_text in self.local_data
        return self.table.supports(t.expr) and not missing_inputs(self.resolver(name), t.expr)

    def _eligible(self, name: Name, t: Task, now: int, takeover: bool = False) -> bool:
        me = self.key.public_key
        if t.results or me in t.taken_at or t.issuer == me:
            return False
        if (name, t.id) in self.in_progress:
            return False
        R = self.config.replication_target
        if takeover:
            if len(t.live_takers(now, self.config.failure_timeout)) >= R:
                return False
        elif len(t.taken_at) >= R and not self.config.trust_replication:
            return False
        if self.config.mode == Mode.ECONOMY and isinstance(t.expr, Call):
            if t.offered_price is None or t.offered_price < self.config.min_price:
                return False
        return self._can_do(name, t)

    def _active(self, name: Name) -> LogPair | None:
        pair = self.store.pairs.get(name)
        if (pair is None or pair.status != PairStatus.ACTIVE or pair.request_log is None
                or pair.result_log is None):
            return None
        return pair

    def select_task(self, name: Name, now: int, rng: random.Random | None = None) -> LogEntry | None:
        """Claim one random eligible task of the pair by appending a take-over note."""
        rng = rng or self.rng
        if self._active(name) is None or len(self.in_progress) >= self.config.capacity:
            return None
        candidates = [t for t in self.views(name).values() if self._eligible(name, t, now)]
        if not candidates:
            return None
        return self._take(name, candidates[rng.randrange(len(candidates))], now)

    def _take(self, name: Name, t: Task, now: int) -> LogEntry:
        entry = self._append(name, WhichLog.REQUEST, EntryKind.TAKE_OVER, encode_task_ref(t.id), now)
        self.in_progress[(name, t.id)] = now
        hit = self._cache_hit(t.expr_text, name)
        if hit is not None or isinstance(t.expr, DataRef):
            delay = 0
        else:
            delay = remaining_cost(self.table, self.resolver(name), t.expr) * self.config.exec_ms_per_unit
        self.timers.append((now + delay, "complete_task", (name, t.id)))
        self._event("task-taken", name=str(name), task=t.id, expr=t.expr_text, price=t.offered_price)
        self._publish(name, WhichLog.REQUEST, [entry], now)
        return entry

    def complete_task(self, name: Name, task_id: str, now: int,
                      result_payload: bytes | None = None) -> LogEntry | None:
        if (name, task_id) not in self.in_progress:
            return None
        pair = self._active(name)
        t = self.views(name).get(task_id) if pair is not None else None
        if t is None or t.results:
            del self.in_progress[(name, task_id)]
            self._event("task-dropped", name=str(name), task=task_id, reason="result-known")
            return None
        value = result_payload
        hit = None
        if value is None:
            hit = self._cache_hit(t.expr_text, name)
            try:
                if hit is not None:
                    value = hit[1]
                elif isinstance(t.expr, DataRef):
                    value = self.local_data[t.expr_text]
                else:
                    value = evaluate(self.table, self.resolver(name), t.expr)
            except (ExecutionError, KeyError) as exc:
                del self.in_progress[(name, task_id)]
                self._event("task-dropped", name=str(name), task=task_id, reason=str(exc))
                return None
        entry = self._append(name, WhichLog.RESULT, EntryKind.DATA, encode_data(t.expr_text, value), now)
        del self.in_progress[(name, task_id)]
        self._event("task-completed", name=str(name), task=task_id, expr=t.expr_text,
                    cached=hit is not None)
        self._publish(name, WhichLog.RESULT, [entry], now)
        if hit is not None:
            self.cache_sales[hit[0]] = self.cache_sales.get(hit[0], 0) + 1
        if self.config.mode == Mode.ECONOMY and self.ledger is not None and t.issuer != self.key.public_key:
            price = t.price_at(t.taken_at[self.key.public_key])
            if price is not None:
                offer = eco.Offer(t.id, t.issuer, price)
                paid = eco.settle(self.ledger, offer, [self.key.public_key], time=now)
                self._event("payment", payer=t.issuer.hex(), payee=self.key.public_key.hex(),
                            amount=price, memo=f"task:{t.id}", ok=bool(paid))
        self._after_change(name, now)
        return entry

    def emit_keepalive(self, now: int) -> list[LogEntry]:
        out = []
        for name, task_id in sorted(self.in_progress):
            if self._active(name) is None:
                continue
            entry = self._append(name, WhichLog.REQUEST, EntryKind.KEEP_ALIVE,
                                 encode_task_ref(task_id), now)
            self._publish(name, WhichLog.REQUEST, [entry], now)
            out.append(entry)
        return out

    def detect_failures(self, now: int, rng: random.Random | None = None) -> list[tuple[int, Name, str]]:
        rng = rng or self.rng
        scheduled = []
        timeout = self.config.failure_timeout
        for name in self.store.names():
            if self._active(name) is None:
                continue
            for t in self.views(name).values():
                if t.results or not t.taken_at or (name, t.id) in self.scheduled_takeovers:
                    continue
                live = t.live_takers(now, timeout)
                if len(live) == len(t.taken_at) or len(live) >= self.config.replication_target:
                    continue
                if not self._eligible(name, t, now, takeover=True):
                    continue
                at = now + rng.randint(0, self.config.takeover_delay_max)
                self.scheduled_takeovers.add((name, t.id))
                self.timers.append((at, "fire_takeover", (name, t.id)))
                self._event("takeover-scheduled", name=str(name), task=t.id, at=at,
                            failed=sorted(k.hex() for k in t.takers - live))
                scheduled.append((at, name, t.id))
        return scheduled

    def fire_takeover(self, name: Name, task_id: str, now: int) -> LogEntry | None:
        self.scheduled_takeovers.discard((name, task_id))
        if self._active(name) is None or len(self.in_progress) >= self.config.capacity:
            return None
        t = self.views(name).get(task_id)
        if t is None or not self._eligible(name, t, now, takeover=True):
            self._event("takeover-skipped", name=str(name), task=task_id)
            return None
        return self._take(name, t, now)

    def work(self, now: int) -> None:
        for name in self.store.names():
            self.select_task(name, now)

    # -- economy -------------------------------------------------------------------

    def offer_round(self, now: int) -> None:
        """One pricing window for every open task this node offered."""
        window = self.config.offer_window
        for name in sorted(self.issued):
            issued = self.issued[name]
            if self._active(name) is None:
                continue
            for t in list(self.views(name).values()):
                lc = issued.local_costs.get(t.expr_text)
                price = t.offered_price
                if lc is None or price is None or t.results:
                    continue
                if now - max(t.offered_at, issued.last_round.get(t.id, t.offered_at)) < window:
                    continue
                issued.last_round[t.id] = now
                seen = issued.takers_seen.get(t.id, 0)
                issued.takers_seen[t.id] = len(t.taken_at)
                if len(t.taken_at) > seen:
                    offer = eco.Offer(t.id, self.key.public_key, price)
                    self.reference_price = eco.adjust_offer(
                        offer, eco.OfferOutcome.TAKEN_WITHIN_WINDOW, lc,
                        self.config.offer_up, self.config.offer_down)
                    continue
                offer = eco.Offer(t.id, self.key.public_key, price)
                new = eco.adjust_offer(offer, eco.OfferOutcome.NOT_TAKEN, lc,
                                       self.config.offer_up, self.config.offer_down)
                if new > price:
                    self._append(name, WhichLog.REQUEST, EntryKind.REQUEST,
                                 encode_request(t.expr_text, new), now)
                    self._publish(name, WhichLog.REQUEST, [self.store.pairs[name].request_log.tail], now)
                    self._event("offer", name=str(name), task=t.id, price=new, local_cost=lc)
                    self._after_change(name, now)
                    continue
                if t.taken_at:
                    continue
                wanted = eco.wanted_raise(price, self.config.offer_up)
                decision = eco.buy_decision(lc, wanted)
                self._event("decision", name=str(name), context="offer", task=t.id,
                            network_price=wanted, local_cost=lc, decision=decision.value)
                if decision == eco.Decision.COMPUTE_LOCALLY and self.table.supports(t.expr):
                    self._compute_locally(name, t, now)

    def _compute_locally(self, name: Name, t: Task, now: int) -> None:
        if (name, t.id) in self.in_progress:
            return
        entry = self._append(name, WhichLog.REQUEST, EntryKind.TAKE_OVER, encode_task_ref(t.id), now)
        self.in_progress[(name, t.id)] = now
        delay = remaining_cost(self.table, self.resolver(name), t.expr) * self.config.exec_ms_per_unit
        self.timers.append((now + delay, "complete_task", (name, t.id)))
        self._event("task-taken", name=str(name), task=t.id, expr=t.expr_text, price=None, local=True)
        self._publish(name, WhichLog.REQUEST, [entry], now)

    def cache_round(self, now: int) -> None:
        if self.ledger is not None:
            for p in self.ledger.payments[self._ledger_cursor:]:
                if p.payee == self.key.public_key and p.memo.startswith("cache:"):
                    for name in self.cache_prices:
                        if p.memo == f"cache:{name}":
                            self.cache_sales[name] = self.cache_sales.get(name, 0) + 1
            self._ledger_cursor = len(self.ledger.payments)
        for name in sorted(self.cache_prices):
            cp = self.cache_prices[name]
            sold = self.cache_sales.get(name, 0)
            self.cache_sales[name] = 0
            outcome = eco.CacheOutcome.SOLD if sold else eco.CacheOutcome.NO_BUYER_WINDOW
            cp.price, prune = eco.reprice_cache(cp, outcome, self.config.cache_up,
                                                self.config.cache_down)
            self._event("cache-price", name=str(name), price=cp.price, outcome=outcome.value)
            if prune:
                self._forget(name, now, "cache-price")

    def _forget(self, name: Name, now: int, reason: str) -> None:
        if name in self.store:
            remove_pair(self.store, name)
        self.cache_prices.pop(name, None)
        self.cache_sales.pop(name, None)
        self.subscribers.pop(name, None)
        self._views.pop(name, None)
        self.forgotten.add(name)
        self._event("purge", name=str(name), what="pair", reason=reason)

    def ttl_round(self, now: int) -> list[Name]:
        if self.config.mode != Mode.TTL:
            return []
        gone = purge_expired(self.store, now)
        for name in gone:
            self.subscribers.pop(name, None)
            self._views.pop(name, None)
            self.forgotten.add(name)
            self._event("purge", name=str(name), what="pair", reason="ttl")
        return gone

    # -- verification ---------------------------------------------------------------

    def start_verification(self, name: Name, now: int) -> int | None:
        holders = sorted(p for p, names in self.advertised.items()
                         if name in names and self._linked(p, now))
        peers = tuple(holders[:min(self.config.verify_quorum, len(holders))])
        if not peers or name not in self.store:
            self._event("verdict", name=str(name), verdict="NoPeers", peers=0)
            return None
        self._nonce += 1
        self.verifications[self._nonce] = _Verification(name, peers)
        for p in peers:
            self.outbox.append((p, TailQuery(self.key.public_key, name, self._nonce)))
        self.timers.append((now + self.config.verify_timeout, "finish_verification", (self._nonce,)))
        return self._nonce

    def handle_tail_query(self, query: TailQuery, now: int) -> TailResponse:
        pair = self.store.pairs.get(query.name)
        head = pair.result_log.head_digest() if pair is not None and pair.result_log else None
        resp = TailResponse(self.key.public_key, query.name, query.nonce, head)
        self.outbox.append((query.sender, resp))
        return resp

    def handle_tail_response(self, resp: TailResponse, now: int) -> None:
        v = self.verifications.get(resp.nonce)
        if v is not None and resp.sender in v.peers:
            v.responses[resp.sender] = resp.head

    def finish_verification(self, nonce: int, now: int) -> VerificationVerdict:
        v = self.verifications.pop(nonce)
        heads = {p: v.responses.get(p) for p in v.peers}
        verdict = verify_result(self, v.name, heads)
        self._event("verdict", name=str(v.name), verdict=verdict.value, peers=len(v.peers),
                    answered=sum(1 for h in heads.values() if h is not None))
        return verdict

    # -- misbehaviour and departure ------------------------------------------------

    def forge(self, name: Name, now: int) -> LogEntry | None:
        """Rewrite a result in the local result-log copy without re-signing it."""
        pair = self.store.pairs.get(name)
        if pair is None or pair.result_log is None or len(pair.result_log) < 2:
            return None
        log = pair.result_log
        idx = len(log) - 1
        victim = log.entries[idx]
        label, value = decode_data(victim.payload)
        forged = LogEntry(victim.author, victim.author_seq, victim.timestamp, victim.kind,
                          encode_data(label, value + b"*"), victim.back_pointer, victim.signature)
        entries = list(log.entries)
        entries[idx] = forged
        pair.result_log = Log(log.name, entries, result=True, scheme=log.scheme)
        self._touch(name, now)
        self._event("forge", name=str(name), index=idx)
        self._publish(name, WhichLog.RESULT, [forged], now)
        return forged

    def flush(self, now: int) -> None:
        """Final sync round before a graceful leave."""
        for name in self.store.names():
            pair = self.store.pairs[name]
            if pair.request_log is not None:
                self._publish(name, WhichLog.REQUEST, pair.request_log.entries, now)
            if pair.result_log is not None:
                self._publish(name, WhichLog.RESULT, pair.result_log.entries, now)
