"""Per-node store of request/result log pairs with the TTL result cache."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .log import Log
from .naming import Name

DEFAULT_TTL_INITIAL = 60_000
DEFAULT_TTL_MAX = 3_600_000


class StoreError(LookupError):
    pass


class DuplicateName(StoreError):
    pass


class NotFound(StoreError):
    pass


class NotCompleted(StoreError):
    pass


class PairStatus(enum.Enum):
    ACTIVE = "Active"
    COMPLETED = "Completed"
    CACHED_ONLY = "CachedOnly"


@dataclass
class LogPair:
    name: Name
    request_log: Log | None
    result_log: Log | None
    ttl_current: int = DEFAULT_TTL_INITIAL
    ttl_expiry: int = DEFAULT_TTL_INITIAL
    status: PairStatus = PairStatus.ACTIVE
    ttl_max: int = DEFAULT_TTL_MAX

    def __post_init__(self):
        if self.request_log is None:
            self.status = PairStatus.CACHED_ONLY


@dataclass
class LogStore:
    ttl_initial: int = DEFAULT_TTL_INITIAL
    ttl_max: int = DEFAULT_TTL_MAX
    pairs: dict[Name, LogPair] = field(default_factory=dict)
    inserted: int = 0
    purged: int = 0

    def __contains__(self, name: Name) -> bool:
        return name in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def names(self) -> list[Name]:
        """Stored names in order; cached until the next insert or removal."""
        version = (self.inserted, self.purged)
        cached = self.__dict__.get("_sorted")
        if cached is None or cached[0] != version:
            cached = (version, sorted(self.pairs))
            self.__dict__["_sorted"] = cached
        return cached[1]

    def new_pair(self, name: Name, request_log: Log | None, result_log: Log | None,
                 now: int = 0) -> LogPair:
        pair = LogPair(name, request_log, result_log, ttl_current=self.ttl_initial,
                       ttl_expiry=now + self.ttl_initial, ttl_max=self.ttl_max)
        insert_pair(self, pair)
        return pair


def insert_pair(store: LogStore, pair: LogPair) -> None:
    if pair.name in store.pairs:
        raise DuplicateName(str(pair.name))
    store.pairs[pair.name] = pair
    store.inserted += 1


def get_pair(store: LogStore, name: Name) -> LogPair:
    try:
        return store.pairs[name]
    except KeyError:
        raise NotFound(str(name)) from None


def list_names(store: LogStore, max_n: int) -> tuple[list[Name], bool, int]:
    names = store.names()
    return names[:max_n], len(names) > max_n, len(names)


def mark_replicated(store: LogStore, name: Name, now: int) -> None:
    pair = get_pair(store, name)
    pair.ttl_current = min(2 * pair.ttl_current, pair.ttl_max)
    pair.ttl_expiry = now + pair.ttl_current


def mark_completed(store: LogStore, name: Name, now: int) -> None:
    """Active -> Completed; the cache lifetime starts counting from here."""
    pair = get_pair(store, name)
    if pair.status == PairStatus.ACTIVE:
        pair.status = PairStatus.COMPLETED
        pair.ttl_expiry = now + pair.ttl_current


def purge_expired(store: LogStore, now: int) -> list[Name]:
    gone = [n for n in store.names()
            if store.pairs[n].ttl_expiry < now and store.pairs[n].status != PairStatus.ACTIVE]
    for n in gone:
        del store.pairs[n]
    store.purged += len(gone)
    return gone


def remove_pair(store: LogStore, name: Name) -> None:
    get_pair(store, name)
    del store.pairs[name]
    store.purged += 1


def purge_request_log(store: LogStore, name: Name) -> None:
    pair = get_pair(store, name)
    if pair.status == PairStatus.ACTIVE:
        raise NotCompleted(str(name))
    pair.request_log = None
    pair.status = PairStatus.CACHED_ONLY
