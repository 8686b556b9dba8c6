"""Digests and pluggable signature schemes.

``ED25519`` is the default. ``HASH`` is a fast deterministic test double whose
signatures anyone can compute; it detects accidental mutation, not forgery.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class Scheme:
    name = "abstract"

    def keypair(self, seed: bytes) -> "KeyPair":
        raise NotImplementedError

    def sign(self, key: "KeyPair", message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    scheme: Scheme = field(repr=False, compare=False)
    _handle: object = field(repr=False, compare=False, default=None)

    def sign(self, message: bytes) -> bytes:
        return self.scheme.sign(self, message)

    @property
    def short(self) -> str:
        return self.public_key.hex()[:8]


@lru_cache(maxsize=1 << 17)
def _ed25519_verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


class Ed25519Scheme(Scheme):
    name = "ed25519"

    def keypair(self, seed: bytes) -> KeyPair:
        sk = Ed25519PrivateKey.from_private_bytes(digest(b"ed25519-seed" + seed))
        pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(pk, self, sk)

    def sign(self, key: KeyPair, message: bytes) -> bytes:
        return key._handle.sign(message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        return _ed25519_verify(bytes(public_key), bytes(message), bytes(signature))


class HashScheme(Scheme):
    name = "hash"

    def keypair(self, seed: bytes) -> KeyPair:
        return KeyPair(digest(b"hash-pk" + seed), self)

    def sign(self, key: KeyPair, message: bytes) -> bytes:
        return digest(key.public_key + message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        return digest(public_key + message) == signature


ED25519 = Ed25519Scheme()
HASH = HashScheme()
SCHEMES = {s.name: s for s in (ED25519, HASH)}
