"""Swarm messages and their canonical binary encodings (see docs/protocol.md)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .crypto import ZERO_DIGEST, KeyPair, Scheme
from .log import LogEntry
from .naming import Name, parse_name
from .wire import DecodeError, Reader, bytes16, bytes32, str16, u8, u16, u32, u64


class MessageType(enum.IntEnum):
    BEACON = 1
    BEACON_REPLY = 2
    LOG_UPDATE = 3
    TAIL_QUERY = 4
    TAIL_RESPONSE = 5


def _name(r: Reader) -> Name:
    try:
        return parse_name(r.str16())
    except ValueError as exc:
        raise DecodeError(f"bad name: {exc}") from None


@dataclass(frozen=True)
class Beacon:
    sender: bytes
    total_logs: int
    truncated: bool
    names: tuple[Name, ...]
    signature: bytes = b""

    type = MessageType.BEACON

    def body(self) -> bytes:
        return (u8(self.type) + bytes16(self.sender) + u32(self.total_logs)
                + u8(self.truncated) + u16(len(self.names))
                + b"".join(str16(str(n)) for n in self.names))

    def encode(self) -> bytes:
        return self.body() + bytes16(self.signature)

    def signed_by(self, key: KeyPair) -> "Beacon":
        return replace(self, signature=key.sign(self.body()))

    def verify(self, scheme: Scheme) -> bool:
        return scheme.verify(self.sender, self.body(), self.signature)

    @classmethod
    def read(cls, r: Reader) -> "Beacon":
        sender = r.bytes16()
        total = r.u32()
        truncated = bool(r.u8())
        names = tuple(_name(r) for _ in range(r.u16()))
        return cls(sender, total, truncated, names, r.bytes16())


@dataclass(frozen=True)
class KnownTails:
    request: bytes | None  # None: the requester holds no request-log and wants none
    result: bytes


@dataclass(frozen=True)
class BeaconReply:
    sender: bytes
    requested: tuple[tuple[Name, KnownTails], ...]
    want_full_list: bool = False

    type = MessageType.BEACON_REPLY

    @property
    def requested_names(self) -> tuple[Name, ...]:
        return tuple(n for n, _ in self.requested)

    @property
    def known_tails(self) -> dict[Name, KnownTails]:
        return dict(self.requested)

    def encode(self) -> bytes:
        out = [u8(self.type), bytes16(self.sender), u8(self.want_full_list),
               u16(len(self.requested))]
        for name, tails in self.requested:
            out += [str16(str(name)), u8(tails.request is not None),
                    tails.request or ZERO_DIGEST, tails.result]
        return b"".join(out)

    @classmethod
    def read(cls, r: Reader) -> "BeaconReply":
        sender = r.bytes16()
        full = bool(r.u8())
        req = []
        for _ in range(r.u16()):
            name = _name(r)
            has_req = r.u8()
            rq = r.take(32)
            rs = r.take(32)
            req.append((name, KnownTails(rq if has_req else None, rs)))
        return cls(sender, tuple(req), full)


class WhichLog(enum.IntEnum):
    REQUEST = 0
    RESULT = 1


@dataclass(frozen=True)
class LogUpdate:
    sender: bytes
    name: Name
    which: WhichLog
    entries: tuple[LogEntry, ...]
    price: int | None = None  # asking price for a cached result-log copy

    type = MessageType.LOG_UPDATE

    def encode(self) -> bytes:
        return (u8(self.type) + bytes16(self.sender) + str16(str(self.name))
                + u8(self.which) + u8(self.price is not None) + u64(self.price or 0)
                + u32(len(self.entries)) + b"".join(bytes32(e.encode()) for e in self.entries))

    @classmethod
    def read(cls, r: Reader) -> "LogUpdate":
        sender = r.bytes16()
        name = _name(r)
        which = WhichLog(r.u8())
        has_price = r.u8()
        price = r.u64()
        entries = tuple(LogEntry.decode(r.bytes32()) for _ in range(r.u32()))
        return cls(sender, name, which, entries, price if has_price else None)


@dataclass(frozen=True)
class TailQuery:
    sender: bytes
    name: Name
    nonce: int

    type = MessageType.TAIL_QUERY

    def encode(self) -> bytes:
        return u8(self.type) + bytes16(self.sender) + str16(str(self.name)) + u32(self.nonce)

    @classmethod
    def read(cls, r: Reader) -> "TailQuery":
        return cls(r.bytes16(), _name(r), r.u32())


@dataclass(frozen=True)
class TailResponse:
    sender: bytes
    name: Name
    nonce: int
    head: bytes | None  # rolling digest of the responder's result-log

    type = MessageType.TAIL_RESPONSE

    def encode(self) -> bytes:
        return (u8(self.type) + bytes16(self.sender) + str16(str(self.name)) + u32(self.nonce)
                + u8(self.head is not None) + (self.head or ZERO_DIGEST))

    @classmethod
    def read(cls, r: Reader) -> "TailResponse":
        sender = r.bytes16()
        name = _name(r)
        nonce = r.u32()
        has = r.u8()
        head = r.take(32)
        return cls(sender, name, nonce, head if has else None)


Message = Beacon | BeaconReply | LogUpdate | TailQuery | TailResponse

_READERS = {
    MessageType.BEACON: Beacon.read,
    MessageType.BEACON_REPLY: BeaconReply.read,
    MessageType.LOG_UPDATE: LogUpdate.read,
    MessageType.TAIL_QUERY: TailQuery.read,
    MessageType.TAIL_RESPONSE: TailResponse.read,
}


def decode_message(data: bytes) -> Message:
    r = Reader(data)
    tag = r.u8()
    try:
        reader = _READERS[MessageType(tag)]
    except ValueError:
        raise DecodeError(f"unknown message type {tag}") from None
    msg = reader(r)
    r.finish()
    return msg
