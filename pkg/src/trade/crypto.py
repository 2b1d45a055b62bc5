"""Pluggable signature schemes and deterministic key material.

The simulation never reads wall-clock entropy: every key is derived from a
master seed plus a label, so replaying a scenario reproduces the same
addresses, signatures and ledger bytes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


class SigningKey:
    """Private half of a key pair as seen by the rest of the package."""

    public_key: bytes

    def sign(self, message: bytes) -> bytes:
        raise NotImplementedError


class SignatureScheme:
    name = "abstract"

    def keypair(self, seed: bytes) -> SigningKey:
        raise NotImplementedError

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


class _Ed25519Key(SigningKey):
    def __init__(self, seed: bytes):
        self._key = Ed25519PrivateKey.from_private_bytes(seed)
        self.public_key = self._key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)

    def __repr__(self) -> str:
        return f"<Ed25519 key {self.public_key[:4].hex()}…>"


class Ed25519Scheme(SignatureScheme):
    """Ed25519; signatures are deterministic, which keeps ledger dumps stable."""

    name = "ed25519"

    def keypair(self, seed: bytes) -> SigningKey:
        return _Ed25519Key(hashlib.sha256(b"ed25519-seed" + seed).digest())

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


DEFAULT_SCHEME = Ed25519Scheme()


def address_of(public_key: bytes) -> str:
    """Pseudonym address: ``0x`` + first 20 bytes of SHA-256(public key)."""
    return "0x" + hashlib.sha256(public_key).hexdigest()[:40]


@dataclass
class KeyFactory:
    """Derives fresh key pairs from a master seed and a running counter."""

    seed: bytes = b"trade"
    scheme: SignatureScheme = DEFAULT_SCHEME
    _counter: int = field(default=0, repr=False)

    def new_key(self, label: str = "") -> SigningKey:
        self._counter += 1
        material = hashlib.sha256(
            self.seed + b"\x00" + label.encode("utf-8") + b"\x00" + str(self._counter).encode()
        ).digest()
        return self.scheme.keypair(material)


@dataclass(frozen=True)
class Signer:
    """A ledger submitter identity together with its private key."""

    submitter: str
    key: SigningKey = field(repr=False, compare=False)

    @property
    def public_key(self) -> bytes:
        return self.key.public_key

    def sign(self, message: bytes) -> bytes:
        return self.key.sign(message)

    @classmethod
    def pseudonym(cls, key: SigningKey) -> "Signer":
        return cls(address_of(key.public_key), key)
