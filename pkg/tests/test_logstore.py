import pytest
from hypothesis import given, strategies as st

from swarms.logstore import (
    DuplicateName,
    LogPair,
    LogStore,
    NotCompleted,
    NotFound,
    PairStatus,
    get_pair,
    insert_pair,
    list_names,
    mark_completed,
    mark_replicated,
    purge_expired,
    purge_request_log,
    remove_pair,
)
from swarms.crypto import HASH
from swarms.log import create_log
from swarms.naming import parse_name

S = 1000
KEY = HASH.keypair(b"store")


def pair(text, **kw):
    name = parse_name(text)
    req = create_log(name, KEY, b"req", 0)
    res = create_log(name, KEY, b"res", 0, result=True)
    return LogPair(name, req, res, **kw)


def test_insert_get():
    store = LogStore()
    p = pair("/a")
    insert_pair(store, p)
    assert get_pair(store, p.name) is p
    with pytest.raises(DuplicateName):
        insert_pair(store, pair("/a"))
    with pytest.raises(NotFound):
        get_pair(LogStore(), p.name)


def test_no_prefix_aliasing():
    store = LogStore()
    insert_pair(store, pair("/a"))
    insert_pair(store, pair("/a/b"))
    assert len(store) == 2
    assert get_pair(store, parse_name("/a/b")).name == parse_name("/a/b")


@pytest.mark.parametrize("n,expected", [(0, (0, False, 0)), (3, (3, False, 3)), (10, (8, True, 10))])
def test_list_names(n, expected):
    store = LogStore()
    for i in range(n):
        insert_pair(store, pair(f"/s/n{i:02d}"))
    names, truncated, total = list_names(store, 8)
    assert (len(names), truncated, total) == expected
    assert names == sorted(names)


def test_mark_replicated_doubles_and_resets():
    store = LogStore(ttl_initial=60 * S, ttl_max=3600 * S)
    p = store.new_pair(parse_name("/x"), None, None, now=0)
    mark_replicated(store, p.name, 100 * S)
    assert (p.ttl_current, p.ttl_expiry) == (120 * S, 220 * S)
    mark_replicated(store, p.name, 100 * S)
    assert p.ttl_current == 240 * S


def test_mark_replicated_at_cap():
    store = LogStore(ttl_initial=3600 * S, ttl_max=3600 * S)
    p = store.new_pair(parse_name("/x"), None, None, now=0)
    mark_replicated(store, p.name, 50 * S)
    assert (p.ttl_current, p.ttl_expiry) == (3600 * S, 3650 * S)
    with pytest.raises(NotFound):
        mark_replicated(store, parse_name("/y"), 0)


@given(st.integers(0, 20))
def test_ttl_after_k_replications(k):
    store = LogStore(ttl_initial=60 * S, ttl_max=3600 * S)
    p = store.new_pair(parse_name("/x"), None, None)
    for i in range(k):
        mark_replicated(store, p.name, i)
    assert p.ttl_current == min(60 * S * 2 ** k, 3600 * S)


def test_purge_expired():
    store = LogStore()
    active = pair("/active", ttl_expiry=10)
    done = pair("/done", ttl_expiry=10)
    insert_pair(store, active)
    insert_pair(store, done)
    assert purge_expired(store, 5) == []
    done.status = PairStatus.COMPLETED
    assert purge_expired(store, 11) == [done.name]
    assert active.name in store
    assert len(store) == store.inserted - store.purged


def test_mark_completed_restarts_expiry():
    store = LogStore(ttl_initial=60 * S)
    p = store.new_pair(parse_name("/x"), pair("/x").request_log, None, now=0)
    mark_completed(store, p.name, 500 * S)
    assert p.status == PairStatus.COMPLETED
    assert p.ttl_expiry == 560 * S


def test_purge_request_log():
    store = LogStore()
    p = pair("/x")
    insert_pair(store, p)
    with pytest.raises(NotCompleted):
        purge_request_log(store, p.name)
    p.status = PairStatus.COMPLETED
    result = p.result_log
    purge_request_log(store, p.name)
    assert p.request_log is None and p.result_log is result
    assert p.status == PairStatus.CACHED_ONLY
    assert list_names(store, 8)[0] == [p.name]


def test_remove_pair():
    store = LogStore()
    insert_pair(store, pair("/x"))
    remove_pair(store, parse_name("/x"))
    assert len(store) == 0
    with pytest.raises(NotFound):
        remove_pair(store, parse_name("/x"))
