"""Signed, back-pointer-chained append-only logs.

Every entry carries a back-pointer to the *content digest* of its predecessor
in canonical order. The content digest covers author, sequence number,
timestamp, kind and payload but not the predecessor's own back-pointer or
signature, so re-signing an entry after a reorder never invalidates its
successor. The signature covers the back-pointer, which is why only the
producer can repair a link.

Canonical order is ``(timestamp, author public key, author_seq)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple

from .crypto import ED25519, SCHEMES, ZERO_DIGEST, KeyPair, Scheme, digest
from .naming import Name, parse_name
from .wire import DecodeError, Reader, bytes16, bytes32, str16, u8, u32, u64


class LogError(Exception):
    pass


class KindNotAllowed(LogError):
    pass


class StaleTimestamp(LogError):
    pass


class AnchorMismatch(LogError):
    pass


class EntryKind(enum.IntEnum):
    REQUEST = 1
    DATA = 2
    TAKE_OVER = 3
    KEEP_ALIVE = 4


@dataclass(frozen=True)
class LogEntry:
    author: bytes
    author_seq: int
    timestamp: int
    kind: EntryKind
    payload: bytes
    back_pointer: bytes
    signature: bytes = b""

    @property
    def identity(self) -> tuple[bytes, int]:
        return (self.author, self.author_seq)

    @property
    def sort_key(self) -> tuple[int, bytes, int]:
        return (self.timestamp, self.author, self.author_seq)

    @cached_property
    def content_bytes(self) -> bytes:
        return (bytes16(self.author) + u64(self.author_seq) + u64(self.timestamp)
                + u8(int(self.kind)) + bytes32(self.payload))

    def signed_bytes(self) -> bytes:
        return self.content_bytes + self.back_pointer

    def encode(self) -> bytes:
        return self.signed_bytes() + bytes16(self.signature)

    @cached_property
    def digest(self) -> bytes:
        """Content digest; the value successors point back to."""
        return digest(self.content_bytes)

    @cached_property
    def full_digest(self) -> bytes:
        """Digest of the complete encoding, signature included."""
        return digest(self.encode())

    def verify(self, scheme: Scheme) -> bool:
        return scheme.verify(self.author, self.signed_bytes(), self.signature)

    @classmethod
    def create(cls, author: KeyPair, author_seq: int, timestamp: int, kind: EntryKind,
               payload: bytes, back_pointer: bytes) -> "LogEntry":
        unsigned = cls(author.public_key, author_seq, timestamp, EntryKind(kind),
                       bytes(payload), back_pointer)
        return replace(unsigned, signature=author.sign(unsigned.signed_bytes()))

    @classmethod
    def read(cls, r: Reader) -> "LogEntry":
        author = r.bytes16()
        seq = r.u64()
        ts = r.u64()
        kind_tag = r.u8()
        try:
            kind = EntryKind(kind_tag)
        except ValueError:
            raise DecodeError(f"unknown entry kind {kind_tag}") from None
        payload = r.bytes32()
        bp = r.take(32)
        sig = r.bytes16()
        return cls(author, seq, ts, kind, payload, bp, sig)

    @classmethod
    def decode(cls, data: bytes) -> "LogEntry":
        r = Reader(data)
        e = cls.read(r)
        r.finish()
        return e


class Verdict(enum.Enum):
    VALID = "Valid"
    PROVISIONALLY_VALID = "ProvisionallyValid"
    INVALID = "Invalid"


@dataclass(frozen=True)
class ValidityReport:
    signatures_ok: bool
    chain_breaks: tuple[int, ...]
    bad_signatures: tuple[int, ...] = ()

    @property
    def verdict(self) -> Verdict:
        if not self.signatures_ok:
            return Verdict.INVALID
        if self.chain_breaks:
            return Verdict.PROVISIONALLY_VALID
        return Verdict.VALID


class Log:
    """A replica of one log. Mutated only by its owning node."""

    def __init__(self, name: Name, entries: Iterable[LogEntry] = (), *,
                 result: bool = False, scheme: Scheme = ED25519):
        self.name = name
        self.result = result
        self.scheme = scheme
        self.entries: list[LogEntry] = list(entries)
        self._ids = {e.identity for e in self.entries}
        self._seq: dict[bytes, int] = {}
        for e in self.entries:
            self._seq[e.author] = max(self._seq.get(e.author, -1), e.author_seq)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[LogEntry]:
        return iter(self.entries)

    def __getitem__(self, i: int) -> LogEntry:
        return self.entries[i]

    def __repr__(self) -> str:
        kind = "result" if self.result else "request"
        return f"Log({self.name}, {kind}, {len(self.entries)} entries)"

    @property
    def anchor(self) -> LogEntry:
        return self.entries[0]

    @property
    def tail(self) -> LogEntry:
        return self.entries[-1]

    def copy(self) -> "Log":
        return Log(self.name, self.entries, result=self.result, scheme=self.scheme)

    def contains(self, identity: tuple[bytes, int]) -> bool:
        return identity in self._ids

    def next_seq(self, author: bytes) -> int:
        return self._seq.get(author, 0) + 1

    def expected_back_pointer(self, index: int) -> bytes:
        return ZERO_DIGEST if index == 0 else self.entries[index - 1].digest

    def chain_breaks(self) -> list[int]:
        return [i for i, e in enumerate(self.entries)
                if e.back_pointer != self.expected_back_pointer(i)]

    def head_digest(self) -> bytes:
        """Rolling digest over the full encodings of all entries in order."""
        h = ZERO_DIGEST
        for e in self.entries:
            h = digest(h + e.full_digest)
        return h

    def tail_digest(self) -> bytes:
        return self.entries[-1].full_digest if self.entries else ZERO_DIGEST

    def _push(self, entry: LogEntry) -> None:
        self.entries.append(entry)
        self._ids.add(entry.identity)
        self._seq[entry.author] = max(self._seq.get(entry.author, -1), entry.author_seq)


def create_log(name: Name, initiator: KeyPair, anchor_payload: bytes, timestamp: int,
               *, result: bool = False) -> Log:
    kind = EntryKind.DATA if result else EntryKind.REQUEST
    anchor = LogEntry.create(initiator, 0, timestamp, kind, anchor_payload, ZERO_DIGEST)
    return Log(name, [anchor], result=result, scheme=initiator.scheme)


def append(log: Log, kind: EntryKind, payload: bytes, author: KeyPair,
           timestamp: int) -> LogEntry:
    if log.result and kind != EntryKind.DATA:
        raise KindNotAllowed(f"{EntryKind(kind).name} entries cannot go into a result-log")
    seq = log.next_seq(author.public_key)
    if log.entries:
        tail = log.tail
        if (timestamp, author.public_key, seq) <= tail.sort_key:
            raise StaleTimestamp(f"timestamp {timestamp} does not follow tail at {tail.timestamp}")
    bp = log.tail.digest if log.entries else ZERO_DIGEST
    entry = LogEntry.create(author, seq, timestamp, kind, payload, bp)
    log._push(entry)
    return entry


def earliest_append_time(log: Log, author: bytes, now: int) -> int:
    """Smallest timestamp >= now at which ``author`` may append to ``log``."""
    if not log.entries:
        return now
    tail = log.tail
    if now > tail.timestamp:
        return now
    if now == tail.timestamp and author > tail.author:
        return now
    if now == tail.timestamp and author == tail.author:
        return now
    return tail.timestamp + 1


def verify_chain(log: Log) -> ValidityReport:
    bad = tuple(i for i, e in enumerate(log.entries) if not e.verify(log.scheme))
    return ValidityReport(not bad, tuple(log.chain_breaks()), bad)


class MergeResult(NamedTuple):
    log: Log
    rechain_needed: frozenset[int]
    rejected: tuple[LogEntry, ...]


def _pick_version(versions: list[LogEntry], expected_bp: bytes, local: LogEntry | None) -> LogEntry:
    correct = [v for v in versions if v.back_pointer == expected_bp]
    if correct:
        if local is not None and local in correct:
            return local
        return max(correct, key=LogEntry.encode)
    return max(versions, key=LogEntry.encode)


def merge(local: Log, remote_entries: Iterable[LogEntry]) -> MergeResult:
    anchor = local.anchor if local.entries else None
    known = {e.identity: e for e in local.entries}
    extra: dict[tuple[bytes, int], list[LogEntry]] = {}
    rejected = []
    for e in remote_entries:
        if e.back_pointer == ZERO_DIGEST or e.author_seq == 0:
            if anchor is None or e.identity != anchor.identity or e.content_bytes != anchor.content_bytes:
                raise AnchorMismatch(f"foreign anchor offered for {local.name}")
        elif anchor is not None and e.sort_key < anchor.sort_key:
            raise AnchorMismatch(f"entry precedes the anchor of {local.name}")
        have = known.get(e.identity)
        if have is not None and have == e:
            continue
        if not e.verify(local.scheme):
            rejected.append(e)
            continue
        if have is not None and have.content_bytes != e.content_bytes:
            # same identity but different content is equivocation; keep ours
            rejected.append(e)
            continue
        bucket = extra.setdefault(e.identity, [])
        if e not in bucket:
            bucket.append(e)

    if not extra:
        return MergeResult(local, frozenset(local.chain_breaks()), tuple(rejected))

    ordered = sorted(set(known) | set(extra), key=lambda ident: (
        (known.get(ident) or extra[ident][0]).sort_key))
    entries: list[LogEntry] = []
    for ident in ordered:
        expected = ZERO_DIGEST if not entries else entries[-1].digest
        mine = known.get(ident)
        versions = ([mine] if mine is not None else []) + extra.get(ident, [])
        entries.append(versions[0] if len(versions) == 1 else _pick_version(versions, expected, mine))
    merged = Log(local.name, entries, result=local.result, scheme=local.scheme)
    return MergeResult(merged, frozenset(merged.chain_breaks()), tuple(rejected))


def rechain_with_changes(log: Log, author: KeyPair) -> tuple[Log, list[LogEntry]]:
    entries = list(log.entries)
    changed = []
    for i, e in enumerate(entries):
        expected = log.expected_back_pointer(i)
        if e.back_pointer != expected and e.author == author.public_key:
            fixed = LogEntry.create(author, e.author_seq, e.timestamp, e.kind, e.payload, expected)
            entries[i] = fixed
            changed.append(fixed)
    if not changed:
        return log, []
    return Log(log.name, entries, result=log.result, scheme=log.scheme), changed


def rechain(log: Log, author: KeyPair) -> Log:
    return rechain_with_changes(log, author)[0]


def entries_after(log: Log, known_head: bytes) -> list[LogEntry]:
    """Entries a peer whose log has rolling digest ``known_head`` is missing.

    Matching a prefix digest rather than the last entry matters: after a merge
    inserts an entry mid-log, a peer can share our tail yet lack that entry.
    An unknown head means the peer's copy diverged, so it gets everything.
    """
    h = ZERO_DIGEST
    if known_head == h:
        return list(log.entries)
    for i, e in enumerate(log.entries):
        h = digest(h + e.full_digest)
        if h == known_head:
            return log.entries[i + 1:]
    return list(log.entries)


def log_from_entries(name: Name, entries: Iterable[LogEntry], *, result: bool,
                     scheme: Scheme = ED25519) -> Log:
    """Start a replica from received entries; the anchor must be among them."""
    good = sorted((e for e in entries if e.verify(scheme)), key=lambda e: e.sort_key)
    if not good or good[0].back_pointer != ZERO_DIGEST or good[0].author_seq != 0:
        raise AnchorMismatch(f"no anchor received for {name}")
    seed = Log(name, good[:1], result=result, scheme=scheme)
    return merge(seed, good[1:]).log


# -- dump format: str(name) as u32-length UTF-8, then u32-length entries -----

def dump_log(log: Log) -> bytes:
    name = str(log.name).encode("utf-8")
    return u32(len(name)) + name + b"".join(bytes32(e.encode()) for e in log.entries)


def load_log(data: bytes, scheme: Scheme | str = ED25519) -> Log:
    if isinstance(scheme, str):
        scheme = SCHEMES[scheme]
    r = Reader(data)
    try:
        name = parse_name(r.bytes32().decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise DecodeError(f"bad log name: {exc}") from None
    entries = []
    while not r.done:
        entries.append(LogEntry.decode(r.bytes32()))
    result = bool(entries) and entries[0].kind == EntryKind.DATA
    return Log(name, entries, result=result, scheme=scheme)
