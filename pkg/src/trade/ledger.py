"""Permissioned append-only ledger with a pending pool and a confirm step.

Two instances exist in a running system, one per network.  Contracts never
mutate their state on submission; they register confirmation handlers and
fold confirmed transactions into their state, so contract state is always a
function of the chain.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Iterator

from .crypto import DEFAULT_SCHEME, SignatureScheme, Signer
from .encoding import DIGEST_SIZE, decode, digest, encode
from .errors import (
    BadSignature,
    DuplicateTxId,
    ForbiddenTransactionType,
    MalformedDump,
    TradeError,
    UnknownSubmitter,
)

GENESIS_DIGEST = bytes(DIGEST_SIZE)


class Network(Enum):
    IDENTITY = "Identity"
    ACTIVITY = "Activity"


class Role(Enum):
    REGISTRAR = "Registrar"
    CLIENT = "Client"
    SERVER = "Server"


class TxType(Enum):
    """Wire tags; ``category`` is the transaction family the tag belongs to."""

    TX_ORIGINAL = ("TX_ORIGINAL", Network.IDENTITY, "IdentityRegistration")
    TX_BLOCKCHAIN = ("TX_BLOCKCHAIN", Network.IDENTITY, "IdentityRegistration")
    TX_REVOCATION = ("TX_REVOCATION", Network.IDENTITY, "OrganizationRevocation")
    TX_VIOLATION = ("TX_VIOLATION", Network.IDENTITY, "ViolationAddition")
    TX_EXPOSURE = ("TX_EXPOSURE", Network.IDENTITY, "ExposureEvent")
    TX_POLICY = ("TX_POLICY", Network.IDENTITY, "PolicyCreation")
    ITX_BADGE = ("ITX_BADGE", Network.IDENTITY, "ProfileBadgeRequest")
    ATX_PUBLISH_DATA = ("ATX_PUBLISH_DATA", Network.ACTIVITY, "PublishData")
    ATX_ACCESS_DATA = ("ATX_ACCESS_DATA", Network.ACTIVITY, "AccessData")
    ATX_CYBER_THREAT = ("ATX_CYBER_THREAT", Network.ACTIVITY, "CyberThreatAssociation")
    ATX_ACCESS_TOKEN = ("ATX_ACCESS_TOKEN", Network.ACTIVITY, "AccessPermissionRequest")
    ATX_TRUST_GROUP = ("ATX_TRUST_GROUP", Network.ACTIVITY, "CyberThreatAssociation")
    ATX_KARMA = ("ATX_KARMA", Network.ACTIVITY, "KarmaTransfer")
    ATX_RATING = ("ATX_RATING", Network.ACTIVITY, "RatingSubmission")
    ATX_LEGAL_SIGNATURE = ("ATX_LEGAL_SIGNATURE", Network.ACTIVITY, "LegalSignature")

    def __init__(self, tag: str, network: Network, category: str):
        self.tag = tag
        self.network = network
        self.category = category

    @classmethod
    def from_tag(cls, tag: str) -> "TxType":
        for member in cls:
            if member.tag == tag:
                return member
        raise KeyError(tag)


T = TxType

# Registrars never write to Activity and servers never write to Identity.
PERMISSIONS: dict[tuple[Network, Role], frozenset[TxType]] = {
    (Network.IDENTITY, Role.REGISTRAR): frozenset(
        {T.TX_ORIGINAL, T.TX_BLOCKCHAIN, T.TX_REVOCATION, T.TX_VIOLATION, T.TX_EXPOSURE}),
    (Network.IDENTITY, Role.CLIENT): frozenset({T.ITX_BADGE, T.TX_POLICY}),
    (Network.IDENTITY, Role.SERVER): frozenset(),
    (Network.ACTIVITY, Role.REGISTRAR): frozenset(),
    (Network.ACTIVITY, Role.CLIENT): frozenset(
        {T.ATX_ACCESS_TOKEN, T.ATX_CYBER_THREAT, T.ATX_TRUST_GROUP, T.ATX_KARMA,
         T.ATX_RATING, T.ATX_LEGAL_SIGNATURE}),
    (Network.ACTIVITY, Role.SERVER): frozenset({T.ATX_PUBLISH_DATA, T.ATX_ACCESS_DATA}),
}

del T


def is_permitted(network: Network, role: Role, tx_type: TxType) -> bool:
    return tx_type in PERMISSIONS[(network, role)]


def network_types(network: Network) -> frozenset[TxType]:
    return frozenset(t for t in TxType if t.network is network)


@dataclass(frozen=True)
class Transaction:
    tx_type: TxType
    submitter: str
    payload: bytes
    timestamp: int
    signature: bytes = field(default=b"", repr=False)

    @property
    def tx_id(self) -> bytes:
        return digest(self.tx_type.tag, self.submitter, self.payload, self.timestamp)

    def signing_bytes(self) -> bytes:
        return encode([self.tx_type.tag, self.submitter, self.payload])

    @property
    def fields(self) -> Any:
        return decode(self.payload)

    @classmethod
    def create(cls, tx_type: TxType, signer: Signer, fields: dict, timestamp: int) -> "Transaction":
        payload = encode(fields)
        unsigned = cls(tx_type, signer.submitter, payload, timestamp)
        return cls(tx_type, signer.submitter, payload, timestamp, signer.sign(unsigned.signing_bytes()))

    def sort_key(self) -> tuple[int, bytes]:
        return (self.timestamp, self.tx_id)


@dataclass(frozen=True)
class Block:
    height: int
    confirmed: tuple[Transaction, ...]
    prev_digest: bytes

    @property
    def digest(self) -> bytes:
        return digest(self.height, self.prev_digest, [tx.tx_id for tx in self.confirmed])


@dataclass(frozen=True)
class Member:
    public_key: bytes
    role: Role


@dataclass(frozen=True)
class Receipt:
    tx_id: bytes
    height: int
    index: int
    error: TradeError | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class Confirmed:
    """A confirmed transaction together with its chain position."""

    tx: Transaction
    height: int
    index: int

    @property
    def position(self) -> tuple[int, int]:
        return (self.height, self.index)


Handler = Callable[[Transaction, "Confirmed"], None]


class Ledger:
    """One permissioned network: membership, pool, chain and receipts."""

    def __init__(self, network: Network, scheme: SignatureScheme = DEFAULT_SCHEME):
        self.network = network
        self.scheme = scheme
        self.allowed_types = network_types(network)
        self.membership: dict[str, Member] = {}
        self._pool: dict[bytes, Transaction] = {}
        self._chain: list[Block] = []
        self._receipts: dict[bytes, Receipt] = {}
        self._handlers: dict[TxType, list[Handler]] = defaultdict(list)
        self._nonces: dict[str, int] = defaultdict(int)
        self._lock = threading.RLock()

    # -- membership ---------------------------------------------------------

    def add_member(self, submitter: str, public_key: bytes, role: Role) -> None:
        with self._lock:
            self.membership[submitter] = Member(public_key, role)

    def is_member(self, submitter: str) -> bool:
        return submitter in self.membership

    def role_of(self, submitter: str) -> Role:
        try:
            return self.membership[submitter].role
        except KeyError:
            raise UnknownSubmitter(submitter) from None

    # -- write path ---------------------------------------------------------

    def next_nonce(self, submitter: str) -> int:
        return self._nonces[submitter]

    def submit(self, tx: Transaction) -> bytes:
        with self._lock:
            member = self.membership.get(tx.submitter)
            if member is None:
                raise UnknownSubmitter(tx.submitter)
            if tx.tx_type not in self.allowed_types or not is_permitted(
                    self.network, member.role, tx.tx_type):
                raise ForbiddenTransactionType(
                    f"{member.role.value} may not submit {tx.tx_type.tag} on {self.network.value}")
            if not self.scheme.verify(member.public_key, tx.signing_bytes(), tx.signature):
                raise BadSignature(tx.submitter)
            tx_id = tx.tx_id
            if tx_id in self._pool or tx_id in self._receipts:
                raise DuplicateTxId(tx_id.hex())
            self._pool[tx_id] = tx
            self._nonces[tx.submitter] += 1
            return tx_id

    def confirm_receipt(self) -> int:
        """Drain the pool into one new block and run contract handlers."""
        with self._lock:
            if not self._pool:
                return 0
            batch = sorted(
                (tx for tx in self._pool.values() if tx.tx_type in self.allowed_types),
                key=Transaction.sort_key)
            for tx in batch:
                del self._pool[tx.tx_id]
            height = len(self._chain)
            prev = self._chain[-1].digest if self._chain else GENESIS_DIGEST
            self._chain.append(Block(height, tuple(batch), prev))
            for index, tx in enumerate(batch):
                where = Confirmed(tx, height, index)
                error = None
                for handler in self._handlers.get(tx.tx_type, ()):
                    try:
                        handler(tx, where)
                    except TradeError as exc:
                        error = exc
                        break
                self._receipts[tx.tx_id] = Receipt(tx.tx_id, height, index, error)
            return len(batch)

    def on_confirm(self, tx_type: TxType, handler: Handler) -> None:
        self._handlers[tx_type].append(handler)

    # -- read path ----------------------------------------------------------

    @property
    def pool(self) -> tuple[Transaction, ...]:
        return tuple(sorted(self._pool.values(), key=Transaction.sort_key))

    @property
    def chain(self) -> tuple[Block, ...]:
        return tuple(self._chain)

    @property
    def height(self) -> int:
        return len(self._chain)

    def receipt(self, tx_id: bytes) -> Receipt | None:
        return self._receipts.get(tx_id)

    def confirmed(self, include_reverted: bool = False) -> Iterator[Confirmed]:
        for block in self._chain:
            for index, tx in enumerate(block.confirmed):
                if include_reverted or self._receipts[tx.tx_id].ok:
                    yield Confirmed(tx, block.height, index)

    def query(self, caller: str, tx_type: TxType | None = None, submitter: str | None = None,
              where: dict | None = None,
              predicate: Callable[[Transaction], bool] | None = None) -> list[Transaction]:
        """Confirmed transactions matching every given filter, in chain order.

        ``where`` matches top-level payload keys by equality.  Reverted
        transactions (handler raised) are on the chain but never returned.
        """
        if caller not in self.membership:
            raise UnknownSubmitter(caller)
        with self._lock:
            result = []
            for item in self.confirmed():
                tx = item.tx
                if tx_type is not None and tx.tx_type is not tx_type:
                    continue
                if submitter is not None and tx.submitter != submitter:
                    continue
                if where:
                    fields = tx.fields
                    if not isinstance(fields, dict) or any(
                            fields.get(k, _MISSING) != v for k, v in where.items()):
                        continue
                if predicate is not None and not predicate(tx):
                    continue
                result.append(tx)
            return result

    def count(self, tx_type: TxType) -> int:
        return sum(1 for item in self.confirmed() if item.tx.tx_type is tx_type)

    # -- dump format --------------------------------------------------------

    def dump(self) -> str:
        """Effective confirmed transactions; reverted ones stay on the chain only."""
        lines = []
        for item in self.confirmed():
            tx = item.tx
            lines.append("|".join((str(item.height), tx.tx_id.hex(), tx.tx_type.tag,
                                   tx.submitter, tx.payload.hex())))
        return "".join(line + "\n" for line in lines)


_MISSING = object()


@dataclass(frozen=True)
class DumpEntry:
    line: int
    height: int
    tx_id: bytes
    tx_type: str
    submitter: str
    payload: bytes

    @property
    def fields(self) -> Any:
        return decode(self.payload)


def load_dump(text: str) -> list[DumpEntry]:
    """Parse the ``height|tx_id|tx_type|submitter|payload`` dump format."""
    entries = []
    last_height = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("|")
        if len(parts) != 5:
            raise MalformedDump(f"line {lineno}: expected 5 fields, got {len(parts)}")
        height_s, tx_hex, tx_type, submitter, payload_hex = parts
        try:
            height = int(height_s)
            tx_id = bytes.fromhex(tx_hex)
            payload = bytes.fromhex(payload_hex)
            TxType.from_tag(tx_type)
            decode(payload)
        except (ValueError, KeyError) as exc:
            raise MalformedDump(f"line {lineno}: {exc}") from None
        if len(tx_id) != DIGEST_SIZE or height < last_height:
            raise MalformedDump(f"line {lineno}: bad tx id or non-monotone height")
        last_height = height
        entries.append(DumpEntry(lineno, height, tx_id, tx_type, submitter, payload))
    return entries


def iter_types(entries: Iterable[DumpEntry], tag: str) -> list[DumpEntry]:
    return [e for e in entries if e.tx_type == tag]
