import random

import pytest

from swarms.crypto import ZERO_DIGEST
from swarms.economy import CoinLedger
from swarms.log import EntryKind, Verdict, verify_chain
from swarms.logstore import PairStatus
from swarms.messages import Beacon, BeaconReply, LogUpdate, TailQuery, TailResponse, WhichLog
from swarms.naming import parse_name
from swarms.payloads import decode_data, decode_task_ref
from swarms.swarm import (
    ConfigError,
    InvalidSignature,
    Mode,
    NoPeers,
    ProtocolConfig,
    VerificationVerdict,
    verify_result,
)

from helpers import make_node

N = parse_name("/swarm/job")
EXPR = "/fn/concat(/fn/upper(/data/a),/data/b)"
INPUTS = {"/data/a": b"sw", "/data/b": b"arm"}
SINGLE = "/fn/upper(/data/a)"


def pump(nodes, now):
    """Deliver queued messages until every outbox is empty."""
    by_key = {n.key.public_key: n for n in nodes}
    for _ in range(100):
        pending = [(n, dst, msg) for n in nodes for dst, msg in n.outbox]
        for n in nodes:
            n.outbox.clear()
        if not pending:
            return
        for src, dst, msg in pending:
            targets = [by_key[dst]] if dst is not None else [m for m in nodes if m is not src]
            for t in targets:
                if isinstance(msg, Beacon):
                    reply = t.handle_beacon(msg, now)
                    if reply is not None:
                        t.outbox.append((src.key.public_key, reply))
                elif isinstance(msg, BeaconReply):
                    t.handle_beacon_reply(msg, now)
                elif isinstance(msg, LogUpdate):
                    t.handle_log_update(msg, now)
                elif isinstance(msg, TailQuery):
                    t.handle_tail_query(msg, now)
                elif isinstance(msg, TailResponse):
                    t.handle_tail_response(msg, now)
    raise AssertionError("messages kept flowing")


def beacon_round(nodes, now):
    for n in nodes:
        n.outbox.append((None, n.make_beacon(now)))
    pump(nodes, now)


def run_timers(node, now):
    due = [t for t in node.timers if t[0] <= now]
    node.timers = [t for t in node.timers if t[0] > now]
    for _, method, args in sorted(due, key=lambda t: t[0]):
        getattr(node, method)(*args, now)


def issued(expr=EXPR, **cfg):
    issuer = make_node("issuer", **cfg)
    issuer.inject(N, expr, 0, inputs=INPUTS)
    return issuer


def test_config_validation():
    with pytest.raises(ConfigError):
        ProtocolConfig(beacon_period=0)
    with pytest.raises(ConfigError):
        ProtocolConfig(keepalive_miss_threshold=1)
    assert ProtocolConfig(beacon_period=700).offer_window == 1400


@pytest.mark.parametrize("logs,names,truncated", [(0, 0, False), (2, 2, False), (12, 8, True)])
def test_make_beacon(logs, names, truncated):
    node = make_node("n")
    for i in range(logs):
        node.inject(parse_name(f"/s/{i:02d}"), "/data/x", 0)
    b = node.make_beacon(0)
    assert (len(b.names), b.truncated, b.total_logs) == (names, truncated, logs)
    assert b.verify(node.key.scheme)


def test_beacon_signature_checked():
    a, b = make_node("a"), make_node("b")
    forged = Beacon(a.key.public_key, 1, False, (N,), b"\x00" * 32)
    with pytest.raises(InvalidSignature):
        b.handle_beacon(forged, 0)


def test_handle_beacon_unknown_name_and_truncation():
    issuer, peer = issued(), make_node("peer")
    reply = peer.handle_beacon(issuer.make_beacon(0), 0)
    assert reply.requested_names == (N,)
    assert reply.known_tails[N].request == reply.known_tails[N].result == ZERO_DIGEST
    assert not reply.want_full_list

    for i in range(10):
        issuer.inject(parse_name(f"/s/{i:02d}"), "/data/x", 0)
    reply = make_node("other").handle_beacon(issuer.make_beacon(0), 0)
    assert reply.want_full_list


def test_no_reply_when_current():
    issuer, peer = issued(), make_node("peer")
    beacon_round([issuer, peer], 0)
    assert peer.handle_beacon(issuer.make_beacon(100), 100) is None


def test_fresh_peer_gets_request_log_first():
    issuer, peer = issued(), make_node("peer")
    reply = peer.handle_beacon(issuer.make_beacon(0), 0)
    updates = issuer.handle_beacon_reply(reply, 0)
    assert [u.which for u in updates] == [WhichLog.REQUEST, WhichLog.RESULT]
    assert peer.key.public_key in issuer.subscribers[N]


def test_up_to_date_peer_gets_nothing_but_is_subscribed():
    issuer = issued()
    pair = issuer.store.pairs[N]
    from swarms.messages import KnownTails
    tails = KnownTails(pair.request_log.head_digest(), pair.result_log.head_digest())
    peer = make_node("peer")
    assert issuer.handle_beacon_reply(BeaconReply(peer.key.public_key, ((N, tails),)), 0) == []
    assert peer.key.public_key in issuer.subscribers[N]


def test_three_names_three_update_pairs():
    issuer = make_node("issuer")
    for i in range(3):
        issuer.inject(parse_name(f"/s/{i}"), EXPR, 0, inputs=INPUTS)
    peer = make_node("peer")
    updates = issuer.handle_beacon_reply(peer.handle_beacon(issuer.make_beacon(0), 0), 0)
    assert len(updates) == 6
    assert len({u.name for u in updates}) == 3


def test_duplicate_update_is_idempotent():
    issuer, peer = issued(), make_node("peer")
    beacon_round([issuer, peer], 0)
    before = [e.encode() for e in peer.store.pairs[N].request_log]
    peer.handle_log_update(LogUpdate(issuer.key.public_key, N, WhichLog.REQUEST,
                                     tuple(issuer.store.pairs[N].request_log.entries)), 1)
    assert [e.encode() for e in peer.store.pairs[N].request_log] == before


def test_timestamp_inversion_leaves_log_provisional():
    issuer, b, c = issued(), make_node("b"), make_node("c")
    beacon_round([issuer, b, c], 0)
    for n in (issuer, b, c):
        n.subscribers[N] = set()  # no gossip: deliver by hand
    eb = b.append_note(N, "/note/b", b"b", 7)
    ec = c.append_note(N, "/note/c", b"c", 5)
    issuer.handle_log_update(LogUpdate(b.key.public_key, N, WhichLog.REQUEST, (eb,)), 8)
    issuer.handle_log_update(LogUpdate(c.key.public_key, N, WhichLog.REQUEST, (ec,)), 8)
    log = issuer.store.pairs[N].request_log
    assert [e.author for e in log.entries[-2:]] == [c.key.public_key, b.key.public_key]
    assert verify_chain(log).verdict == Verdict.PROVISIONALLY_VALID


def test_select_task_takes_a_candidate():
    issuer, peer = issued(), make_node("peer")
    beacon_round([issuer, peer], 0)
    entry = peer.select_task(N, 10, random.Random(1))
    assert entry.kind == EntryKind.TAKE_OVER
    second = peer.select_task(N, 11)
    # the root is eligible too: its missing sub-result can be recomputed
    taken = {peer.views(N)[decode_task_ref(e.payload)].expr_text for e in (entry, second)}
    assert taken == {"/fn/upper(/data/a)", EXPR}
    assert peer.select_task(N, 12) is None


def test_select_task_respects_replication_target():
    issuer = issued(SINGLE, replication_target=1)
    a, b = make_node("a", replication_target=1), make_node("b", replication_target=1)
    nodes = [issuer, a, b]
    beacon_round(nodes, 0)
    assert a.select_task(N, 10) is not None
    pump(nodes, 10)
    assert b.select_task(N, 11) is None


def test_keepalives_name_their_task():
    issuer, peer = issued(exec_ms_per_unit=10_000), make_node("peer", exec_ms_per_unit=10_000)
    beacon_round([issuer, peer], 0)
    assert peer.emit_keepalive(5) == []
    taken = peer.select_task(N, 10)
    peer.in_progress[(N, "fake")] = 10
    entries = peer.emit_keepalive(5000)
    assert len(entries) == 2
    assert {decode_task_ref(e.payload) for e in entries} == {decode_task_ref(taken.payload), "fake"}


def _taken_then_silent(R=2):
    cfg = dict(replication_target=R, exec_ms_per_unit=100_000, takeover_delay_max=4000)
    issuer, a, b = issued(SINGLE, **cfg), make_node("a", **cfg), make_node("b", **cfg)
    nodes = [issuer, a, b]
    beacon_round(nodes, 0)
    a.select_task(N, 10)
    pump(nodes, 10)
    return nodes


def test_detect_failures():
    issuer, a, b = _taken_then_silent()
    assert b.detect_failures(1000) == []  # a is fresh, one live taker but nobody failed
    now = 10 + b.config.failure_timeout + 1
    scheduled = b.detect_failures(now, random.Random(3))
    assert len(scheduled) == 1
    at, name, task = scheduled[0]
    assert now <= at <= now + b.config.takeover_delay_max
    assert b.detect_failures(now) == []  # already scheduled
    run_timers(b, at)
    assert (N, task) in b.in_progress


def test_takeover_skipped_when_back_at_target():
    issuer, a, b = _taken_then_silent(R=1)
    c = make_node("c", replication_target=1, exec_ms_per_unit=100_000)
    now = 10 + b.config.failure_timeout + 1
    (at, name, task), = b.detect_failures(now)
    # c joins and takes the task over before b's timer fires
    beacon_round([issuer, b, c], at - 2)
    assert c.fire_takeover(name, task, at - 1) is not None
    pump([issuer, b, c], at - 1)
    assert b.fire_takeover(name, task, at) is None
    assert (N, task) not in b.in_progress


def test_complete_task_and_completion():
    cfg = dict(auto_purge=False, exec_ms_per_unit=1)
    issuer, a, b = issued(SINGLE, **cfg), make_node("a", **cfg), make_node("b", **cfg)
    nodes = [issuer, a, b]
    beacon_round(nodes, 0)
    first = a.select_task(N, 10)
    b.select_task(N, 10)
    pump(nodes, 10)
    run_timers(a, 100)
    run_timers(b, 100)
    pump(nodes, 100)
    results = [e for e in issuer.store.pairs[N].result_log.entries[1:] if e.kind == EntryKind.DATA]
    assert [decode_data(e.payload) for e in results] == [(SINGLE, b"SW")] * 2
    assert issuer.views(N)[decode_task_ref(first.payload)].results == 2
    pair = issuer.store.pairs[N]
    assert pair.status == PairStatus.COMPLETED
    assert issuer.final_results[N] == b"SW"
    issuer.purge_requests(N, 200)
    assert pair.status == PairStatus.CACHED_ONLY and pair.request_log is None
    assert issuer.make_beacon(200).names == (N,)


def test_complete_task_records_one_entry():
    issuer, a = issued(exec_ms_per_unit=1), make_node("a", exec_ms_per_unit=1)
    beacon_round([issuer, a], 0)
    entry = a.select_task(N, 10)
    before = len(a.store.pairs[N].result_log)
    a.complete_task(N, decode_task_ref(entry.payload), 20)
    assert len(a.store.pairs[N].result_log) == before + 1
    assert a.complete_task(N, decode_task_ref(entry.payload), 21) is None


def test_verify_result():
    nodes = [issued()] + [make_node(f"p{i}") for i in range(3)]
    beacon_round(nodes, 0)
    me = nodes[1]
    head = me.store.pairs[N].result_log.head_digest()
    peers = {n.key.public_key: n.store.pairs[N].result_log.head_digest() for n in nodes[2:]}
    assert verify_result(me, N, peers) == VerificationVerdict.CONFIRMED
    peers[nodes[2].key.public_key] = b"\x09" * 32
    assert verify_result(me, N, peers) == VerificationVerdict.SUSPECT
    with pytest.raises(NoPeers):
        verify_result(me, N, {})
    me.store.pairs[N].result_log.entries.append(me.store.pairs[N].result_log.entries[0])
    assert verify_result(me, N, {k: head for k in peers}) == VerificationVerdict.SUSPECT


def test_verification_round_trip_over_messages():
    nodes = [issued()] + [make_node(f"p{i}") for i in range(3)]
    beacon_round(nodes, 0)
    me = nodes[1]
    nonce = me.start_verification(N, 5)
    pump(nodes, 5)
    assert me.finish_verification(nonce, 600) == VerificationVerdict.CONFIRMED


def test_economy_cache_purchase():
    ledger = CoinLedger(initial_balance=100)
    cfg = dict(mode=Mode.ECONOMY)
    seller = make_node("seller", **cfg)
    seller.ledger = ledger
    seller.inject(N, EXPR, 0, inputs=INPUTS)
    buyer = make_node("buyer", **cfg)
    buyer.ledger = ledger
    for n in (seller, buyer):
        ledger.open_account(n.key.public_key)
    pair = seller.store.pairs[N]
    update = LogUpdate(seller.key.public_key, N, WhichLog.RESULT, tuple(pair.result_log.entries), price=3)
    buyer.handle_log_update(update, 0)
    assert N in buyer.store
    assert (ledger.balance(buyer.key.public_key), ledger.balance(seller.key.public_key)) == (97, 103)

    greedy = make_node("greedy", **cfg)
    greedy.ledger = ledger
    ledger.open_account(greedy.key.public_key)
    # the whole expression costs 7 locally, so 7 is no bargain
    greedy.handle_log_update(LogUpdate(seller.key.public_key, N, WhichLog.RESULT,
                                       update.entries, price=7), 0)
    assert N not in greedy.store and N in greedy.declined
    assert ledger.balance(greedy.key.public_key) == 100
