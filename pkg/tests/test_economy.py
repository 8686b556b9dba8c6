import math

import pytest
from hypothesis import given, strategies as st

from swarms.economy import (
    CacheOutcome,
    CachePrice,
    CoinLedger,
    Decision,
    InsufficientFunds,
    Offer,
    OfferOutcome,
    adjust_offer,
    buy_decision,
    initial_cache_price,
    reprice_cache,
    settle,
    transfer,
)

A, B, C = b"a", b"b", b"c"


def ledger(balance=100):
    led = CoinLedger(initial_balance=balance)
    for k in (A, B, C):
        led.open_account(k)
    return led


def test_transfer():
    led = ledger()
    transfer(led, A, B, 5)
    assert (led.balance(A), led.balance(B)) == (95, 105)
    transfer(led, A, B, 0)
    assert len(led.payments) == 1
    with pytest.raises(InsufficientFunds):
        transfer(led, A, B, 500)
    assert (led.balance(A), led.balance(B)) == (95, 105)


def test_settle_pays_each_delivering_taker_once():
    led = ledger()
    offer = Offer("t1", A, 10)
    assert settle(led, offer, [B, C]) == [B, C]
    assert (led.balance(A), led.balance(B), led.balance(C)) == (80, 110, 110)
    assert settle(led, offer, [B]) == []
    assert settle(led, Offer("t2", A, 10), []) == []
    assert settle(led, Offer("t3", A, 10), [C]) == [C]
    assert led.balance(B) == 110


def test_settle_skips_when_offerer_is_broke():
    led = ledger(balance=15)
    assert settle(led, Offer("t", A, 10), [B, C]) == [B]
    assert led.balance(A) == 5


def test_adjust_offer():
    assert adjust_offer(Offer("t", A, 10), OfferOutcome.NOT_TAKEN, 50) == 13
    assert adjust_offer(Offer("t", A, 10), OfferOutcome.TAKEN_WITHIN_WINDOW, 50) == 9
    o = Offer("t", A, 48)
    o.price = adjust_offer(o, OfferOutcome.NOT_TAKEN, 50)
    assert o.price == 49
    assert adjust_offer(o, OfferOutcome.NOT_TAKEN, 50) == 49
    assert buy_decision(50, 49) == Decision.BUY
    assert adjust_offer(Offer("t", A, 1), OfferOutcome.TAKEN_WITHIN_WINDOW, 50) == 1


@given(st.integers(1, 500), st.integers(2, 500),
       st.lists(st.sampled_from(list(OfferOutcome)), min_size=1, max_size=40))
def test_price_stays_under_cap(p0, local_cost, outcomes):
    o = Offer("t", A, p0)
    raised = False
    for out in outcomes:
        o.price = adjust_offer(o, out, local_cost)
        raised |= out == OfferOutcome.NOT_TAKEN
        assert o.price >= 1
        if raised:
            assert o.price <= max(local_cost - 1, 1)


def test_reprice_cache():
    assert reprice_cache(CachePrice("n", 8), CacheOutcome.NO_BUYER_WINDOW) == (4, False)
    assert reprice_cache(CachePrice("n", 2), CacheOutcome.NO_BUYER_WINDOW) == (1, True)
    assert reprice_cache(CachePrice("n", 8), CacheOutcome.SOLD) == (10, False)


@given(st.integers(2, 10**6), st.integers(1, 50))
def test_cache_price_prunes_in_bounded_windows(p0, threshold):
    cp = CachePrice("n", p0, threshold)
    windows, prune = 0, p0 <= threshold
    while not prune:
        cp.price, prune = reprice_cache(cp, CacheOutcome.NO_BUYER_WINDOW)
        windows += 1
    assert windows <= max(math.ceil(math.log2(p0 / threshold)), 0)


def test_initial_cache_price():
    assert initial_cache_price(40, 0.5) == 20
    assert initial_cache_price(40, 0.25) == 10
    assert initial_cache_price(0, 0.5) == 0
    with pytest.raises(ValueError):
        initial_cache_price(40, 0)


@pytest.mark.parametrize("price,want", [(30, Decision.BUY), (50, Decision.COMPUTE_LOCALLY), (60, Decision.COMPUTE_LOCALLY)])
def test_buy_decision(price, want):
    assert buy_decision(50, price) == want


@given(st.lists(st.tuples(st.sampled_from([A, B, C]), st.sampled_from([A, B, C]), st.integers(0, 150)), max_size=60))
def test_conservation(ops):
    led = ledger()
    for i, (src, dst, amount) in enumerate(ops):
        try:
            if i % 2:
                transfer(led, src, dst, amount)
            else:
                settle(led, Offer(f"t{i}", src, amount), [dst])
        except InsufficientFunds:
            pass
        assert led.total() == 300
        assert min(led.balances.values()) >= 0
