"""Payload layouts for the four entry kinds.

Request      ``<expression>`` or ``<expression>\\nprice=<coins>``
Data         ``<name or expression>\\n<raw bytes>``
TakeOver     ``<task id hex>``
KeepAlive    ``<task id hex>``

A newline can never occur inside a name, so it is a safe separator.
"""

from __future__ import annotations


def encode_request(expr_text: str, price: int | None = None) -> bytes:
    out = expr_text.encode("utf-8")
    if price is not None:
        out += b"\nprice=" + str(price).encode("ascii")
    return out


def decode_request(payload: bytes) -> tuple[str, int | None]:
    text, sep, rest = payload.partition(b"\n")
    price = None
    if sep and rest.startswith(b"price="):
        price = int(rest[6:].decode("ascii"))
    return text.decode("utf-8"), price


def encode_data(label: str, value: bytes) -> bytes:
    return label.encode("utf-8") + b"\n" + value


def decode_data(payload: bytes) -> tuple[str, bytes]:
    label, _, value = payload.partition(b"\n")
    return label.decode("utf-8"), value


def encode_task_ref(task_id: str) -> bytes:
    return task_id.encode("ascii")


def decode_task_ref(payload: bytes) -> str:
    return payload.decode("ascii", errors="replace")
