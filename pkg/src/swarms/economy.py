"""Simulated coin ledger and supply/demand pricing rules.

Prices are whole coins. Multiplicative factors are applied with exact
rational arithmetic so that e.g. ``10 * 1.1`` rounds up to 11, not 12.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

DEFAULT_INITIAL_BALANCE = 1000
OFFER_UP = 1.25
OFFER_DOWN = 0.9
CACHE_UP = 1.25
CACHE_DOWN = 0.5


class InsufficientFunds(Exception):
    pass


def _scaled(price: int, factor: float) -> Fraction:
    return price * Fraction(str(factor))


@dataclass
class Payment:
    time: int
    payer: bytes
    payee: bytes
    amount: int
    memo: str


@dataclass
class CoinLedger:
    initial_balance: int = DEFAULT_INITIAL_BALANCE
    balances: dict[bytes, int] = field(default_factory=dict)
    payments: list[Payment] = field(default_factory=list)
    settled: set[tuple[str, bytes]] = field(default_factory=set)

    def open_account(self, key: bytes, balance: int | None = None) -> None:
        self.balances[key] = self.initial_balance if balance is None else balance

    def balance(self, key: bytes) -> int:
        return self.balances[key]

    def total(self) -> int:
        return sum(self.balances.values())

    def credit_external(self, key: bytes, amount: int) -> None:
        """Coins bought on an outside market; the only way supply grows."""
        self.balances[key] += amount


def transfer(ledger: CoinLedger, src: bytes, dst: bytes, amount: int, *,
             time: int = 0, memo: str = "") -> None:
    if amount < 0:
        raise ValueError("negative transfer")
    if amount == 0:
        return
    if ledger.balances[src] < amount:
        raise InsufficientFunds(f"balance {ledger.balances[src]} < {amount}")
    ledger.balances[src] -= amount
    ledger.balances[dst] += amount
    ledger.payments.append(Payment(time, src, dst, amount, memo))


@dataclass
class Offer:
    task_id: str
    offerer: bytes
    price: int
    history: list[str] = field(default_factory=list)


class OfferOutcome(enum.Enum):
    TAKEN_WITHIN_WINDOW = "TakenWithinWindow"
    NOT_TAKEN = "NotTaken"


def settle(ledger: CoinLedger, offer: Offer, takers, *, time: int = 0) -> list[bytes]:
    """Pay ``offer.price`` to each delivering taker once. Returns those paid.

    Takers who cannot be paid because the offerer ran dry are skipped.
    """
    paid = []
    for taker in takers:
        key = (offer.task_id, taker)
        if taker == offer.offerer or key in ledger.settled:
            continue
        try:
            transfer(ledger, offer.offerer, taker, offer.price, time=time,
                     memo=f"task:{offer.task_id}")
        except InsufficientFunds:
            continue
        ledger.settled.add(key)
        paid.append(taker)
    return paid


def offer_cap(local_cost: int) -> int:
    return local_cost - 1


def adjust_offer(offer: Offer, outcome: OfferOutcome, local_cost: int,
                 up_factor: float = OFFER_UP, down_factor: float = OFFER_DOWN) -> int:
    cap = offer_cap(local_cost)
    if outcome == OfferOutcome.NOT_TAKEN:
        price = min(math.ceil(_scaled(offer.price, up_factor)), cap)
    else:
        price = math.floor(_scaled(offer.price, down_factor))
    return max(price, 1)


def wanted_raise(price: int, up_factor: float = OFFER_UP) -> int:
    """The uncapped price an unaccepted offer would move to."""
    return math.ceil(_scaled(price, up_factor))


class Decision(enum.Enum):
    BUY = "Buy"
    COMPUTE_LOCALLY = "ComputeLocally"


def buy_decision(buyer_local_cost: int, network_price: int) -> Decision:
    return Decision.BUY if network_price < buyer_local_cost else Decision.COMPUTE_LOCALLY


@dataclass
class CachePrice:
    name: object
    price: int
    prune_threshold: int = 1


class CacheOutcome(enum.Enum):
    SOLD = "Sold"
    NO_BUYER_WINDOW = "NoBuyerWindow"


def reprice_cache(cp: CachePrice, outcome: CacheOutcome, up_factor: float = CACHE_UP,
                  down_factor: float = CACHE_DOWN) -> tuple[int, bool]:
    if outcome == CacheOutcome.SOLD:
        price = math.ceil(_scaled(cp.price, up_factor))
    else:
        price = math.floor(_scaled(cp.price, down_factor))
    return price, price <= cp.prune_threshold


def initial_cache_price(paid: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    return math.floor(_scaled(paid, fraction))
