"""Activity network contracts: data management (DMC) and permissions (PC).

Records, tokens, retrieval logs and notifications are all derived from
confirmed Activity-ledger transactions.  Badge validity is read from the
Identity network at the moment a token request is confirmed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping

from .crypto import Signer
from .encoding import DIGEST_SIZE
from .errors import (
    InvalidBadge,
    MalformedRecord,
    NotGranted,
    NotOwner,
    PolicyCoverageIncomplete,
    UnknownAPT,
    UnknownPrivilege,
    UnknownRecord,
    UnknownSubmitter,
)
from .identity import IdentityNetwork
from .ledger import Confirmed, Ledger, Network, Role, Transaction, TxType
from .runtime import Runtime


class Privilege(Enum):
    READ = "Read"
    SUBSCRIBE = "Subscribe"


class NotificationReason(Enum):
    NEW_RECORD = "NewRecord"
    MODIFIED = "Modified"
    NEW_TRUST_GROUP = "NewTrustGroup"


@dataclass(frozen=True)
class DataRecord:
    record_uid: str
    owner: str
    privilege_policy_map: Mapping[Privilege, tuple[str, ...]]
    content_digest: bytes
    description: str
    keywords: frozenset[str]
    server_address: str
    legal_terms: str | None = None

    def to_fields(self) -> dict:
        return {
            "record_uid": self.record_uid,
            "owner": self.owner,
            "privileges": {p.value: list(ids) for p, ids in self.privilege_policy_map.items()},
            "digest": self.content_digest,
            "description": self.description,
            "keywords": sorted(self.keywords),
            "server_address": self.server_address,
            "legal_terms": self.legal_terms,
        }

    @classmethod
    def from_fields(cls, fields: dict) -> "DataRecord":
        try:
            privileges = {Privilege(k): tuple(v) for k, v in fields["privileges"].items()}
        except ValueError as exc:
            raise MalformedRecord(str(exc)) from None
        return cls(fields["record_uid"], fields["owner"], privileges, fields["digest"],
                   fields["description"], frozenset(fields["keywords"]),
                   fields["server_address"], fields.get("legal_terms"))

    def validate(self) -> None:
        if not self.privilege_policy_map:
            raise MalformedRecord("record needs at least one privilege")
        if not isinstance(self.content_digest, bytes) or len(self.content_digest) != DIGEST_SIZE:
            raise MalformedRecord("content digest must be 32 bytes")
        if not self.server_address:
            raise MalformedRecord("record needs a server address")
        for kw in self.keywords:
            if not kw or kw != kw.lower() or "," in kw or any(c.isspace() for c in kw):
                raise MalformedRecord(f"bad keyword {kw!r}")


@dataclass(frozen=True)
class AccessPermissionToken:
    apt_ref: str
    requester: str
    requester_public_key: bytes
    privilege: Privilege
    record_uid: str
    issued: int
    expiration: int


@dataclass(frozen=True)
class Notification:
    recipient: str
    record_uid: str
    reason: NotificationReason
    matched_keywords: frozenset[str]

    def serialize(self) -> str:
        return f"{self.record_uid}|{self.reason.value}|{','.join(sorted(self.matched_keywords))}"


@dataclass(frozen=True)
class TransparencyEvent:
    kind: str  # "apt" or "retrieval"
    apt_ref: str
    requester: str
    privilege: Privilege
    tick: int
    position: tuple[int, int]

    def line(self) -> str:
        return f"{self.tick}|{self.kind}|{self.apt_ref}|{self.requester}|{self.privilege.value}"


@dataclass
class _Published:
    record_uid: str
    digest: bytes
    owner: str
    server_address: str


@dataclass
class _RecordState:
    record: DataRecord
    tick: int
    position: tuple[int, int]


AprGuard = Callable[[str, DataRecord], None]


def normalize_keywords(words: Iterable[str]) -> frozenset[str]:
    return frozenset(w.strip().lower() for w in words if w.strip())


class ActivityNetwork:
    """Data management (DMC) and permission (PC) contracts."""

    def __init__(self, ledger: Ledger, runtime: Runtime, identity: IdentityNetwork):
        if ledger.network is not Network.ACTIVITY:
            raise ValueError("activity contracts need the Activity ledger")
        self.ledger = ledger
        self.runtime = runtime
        self.identity = identity
        self.published: dict[str, _Published] = {}
        self.records: dict[str, _RecordState] = {}
        self.tokens: dict[str, AccessPermissionToken] = {}
        self.token_events: dict[str, list[TransparencyEvent]] = {}
        self.retrievals: dict[str, list[TransparencyEvent]] = {}
        self.subscriptions: dict[str, frozenset[str]] = {}
        self.mailboxes: dict[str, list[Notification]] = {}
        self.trust_groups: dict[str, frozenset[str]] = {}
        # Extra admission checks for token requests, run in order (karma, legal).
        self.apr_guards: list[AprGuard] = []
        self.record_listeners: list[Callable[[DataRecord, Confirmed], None]] = []
        self.token_listeners: list[Callable[[AccessPermissionToken, Confirmed], None]] = []
        for tx_type, handler in (
                (TxType.ATX_PUBLISH_DATA, self._on_publish_data),
                (TxType.ATX_CYBER_THREAT, self._on_cyber_threat),
                (TxType.ATX_ACCESS_TOKEN, self._on_access_token),
                (TxType.ATX_ACCESS_DATA, self._on_access_data),
                (TxType.ATX_TRUST_GROUP, self._on_trust_group)):
            ledger.on_confirm(tx_type, handler)
        identity.pseudonym_listeners.append(self._admit)

    def _admit(self, pseudonym) -> None:
        self.ledger.add_member(pseudonym.address, pseudonym.public_key, Role.CLIENT)

    # -- DMC -------------------------------------------------------------------

    def record(self, record_uid: str) -> DataRecord:
        try:
            return self.records[record_uid].record
        except KeyError:
            raise UnknownRecord(record_uid) from None

    def has_record(self, record_uid: str) -> bool:
        return record_uid in self.records

    def _check_record(self, record: DataRecord, modifying: bool = False) -> None:
        record.validate()
        self.identity.require_active(record.owner)
        published = self.published.get(record.record_uid)
        if published is None:
            raise UnknownRecord(f"no server publication for {record.record_uid}")
        if (published.owner, published.digest, published.server_address) != (
                record.owner, record.content_digest, record.server_address):
            raise MalformedRecord(f"{record.record_uid} disagrees with its server publication")
        if (record.record_uid in self.records) is not modifying:
            raise MalformedRecord(f"{record.record_uid} already associated"
                                  if not modifying else f"{record.record_uid} not yet associated")
        if modifying and self.records[record.record_uid].record.owner != record.owner:
            raise NotOwner(record.record_uid)
        for ids in record.privilege_policy_map.values():
            for policy_id in ids:
                doc = self.identity.policy(policy_id)
                if not doc.may_reference(record.owner):
                    raise NotGranted(f"{record.owner} may not reference {policy_id}")

    def publish_data(self, owner: Signer, record: DataRecord) -> str:
        """Associate a server-published payload with its metadata and policies."""
        if record.owner != owner.submitter:
            raise NotOwner("records are published by their owner")
        self._check_record(record)
        self.runtime.commit(self.ledger, TxType.ATX_CYBER_THREAT, owner,
                            {"action": "publish", "record": record.to_fields()})
        return record.record_uid

    def modify_record(self, owner: Signer, record: DataRecord) -> str:
        if record.owner != owner.submitter:
            raise NotOwner("records are modified by their owner")
        self._check_record(record, modifying=True)
        self.runtime.commit(self.ledger, TxType.ATX_CYBER_THREAT, owner,
                            {"action": "modify", "record": record.to_fields()})
        return record.record_uid

    def _on_publish_data(self, tx: Transaction, where: Confirmed) -> None:
        f = tx.fields
        if f["record_uid"] in self.published:
            raise MalformedRecord(f"duplicate record uid {f['record_uid']}")
        self.published[f["record_uid"]] = _Published(f["record_uid"], f["digest"], f["owner"],
                                                      f["server_address"])

    def _on_cyber_threat(self, tx: Transaction, where: Confirmed) -> None:
        modifying = tx.fields["action"] == "modify"
        record = DataRecord.from_fields(tx.fields["record"])
        if record.owner != tx.submitter:
            raise NotOwner("records are published by their owner")
        self._check_record(record, modifying=modifying)
        if modifying:
            state = self.records[record.record_uid]
            state.record = record
        else:
            self.records[record.record_uid] = _RecordState(record, tx.timestamp, where.position)
        reason = NotificationReason.MODIFIED if modifying else NotificationReason.NEW_RECORD
        self._notify(record.record_uid, record.keywords, reason)
        if not modifying:
            self.identity.record_contribution(record.owner)
            for listener in self.record_listeners:
                listener(record, where)

    # -- notifications -----------------------------------------------------------

    def subscribe(self, subscriber: str, keywords: Iterable[str]) -> frozenset[str]:
        if not self.ledger.is_member(subscriber):
            raise UnknownSubmitter(subscriber)
        merged = self.subscriptions.get(subscriber, frozenset()) | normalize_keywords(keywords)
        self.subscriptions[subscriber] = merged
        self.mailboxes.setdefault(subscriber, [])
        return merged

    def _notify(self, uid: str, keywords: frozenset[str], reason: NotificationReason) -> None:
        for subscriber in sorted(self.subscriptions):
            matched = self.subscriptions[subscriber] & keywords
            if matched:
                self.mailboxes[subscriber].append(Notification(subscriber, uid, reason, matched))

    def drain(self, subscriber: str) -> list[Notification]:
        box = self.mailboxes.get(subscriber, [])
        drained = list(box)
        box.clear()
        return drained

    def create_trust_group(self, owner: Signer, group_id: str, keywords: Iterable[str]) -> str:
        self.identity.require_active(owner.submitter)
        self.runtime.commit(self.ledger, TxType.ATX_TRUST_GROUP, owner,
                            {"group_id": group_id, "keywords": sorted(normalize_keywords(keywords))})
        return group_id

    def _on_trust_group(self, tx: Transaction, where: Confirmed) -> None:
        f = tx.fields
        if f["group_id"] in self.trust_groups:
            raise MalformedRecord(f"duplicate trust group {f['group_id']}")
        keywords = frozenset(f["keywords"])
        self.trust_groups[f["group_id"]] = keywords
        self._notify(f["group_id"], keywords, NotificationReason.NEW_TRUST_GROUP)

    # -- search / navigation ---------------------------------------------------

    def search(self, caller: str, keywords: Iterable[str]) -> list[str]:
        if not self.ledger.is_member(caller):
            raise UnknownSubmitter(caller)
        query = normalize_keywords(keywords)
        hits = [s for s in self.records.values() if s.record.keywords & query]
        hits.sort(key=lambda s: s.record.record_uid)
        hits.sort(key=lambda s: s.tick, reverse=True)
        return [s.record.record_uid for s in hits]

    def navigate(self, record_uid: str) -> str:
        return self.record(record_uid).server_address

    def published_tick(self, record_uid: str) -> int:
        try:
            return self.records[record_uid].tick
        except KeyError:
            raise UnknownRecord(record_uid) from None

    # -- PC ----------------------------------------------------------------------

    def _check_request(self, requester: str, record_uid: str, privilege: Privilege,
                       badge_refs: Iterable[str]) -> DataRecord:
        self.identity.require_active(requester)
        record = self.record(record_uid)
        if privilege not in record.privilege_policy_map:
            raise UnknownPrivilege(f"{privilege.value} not offered by {record_uid}")
        covered = set()
        for ref in badge_refs:
            badge = self.identity.badge(ref)
            if badge is None or not badge.valid or badge.holder != requester:
                raise InvalidBadge(ref)
            covered.add(badge.policy_id)
        missing = set(record.privilege_policy_map[privilege]) - covered
        if missing:
            raise PolicyCoverageIncomplete(f"no badge for {', '.join(sorted(missing))}")
        for guard in self.apr_guards:
            guard(requester, record)
        return record

    def access_permission_request(self, requester: Signer, record_uid: str, privilege: Privilege,
                                  badge_refs: Iterable[str], ttl: int | None = None) -> str:
        refs = sorted(set(badge_refs))
        self._check_request(requester.submitter, record_uid, privilege, refs)
        cap = self.runtime.config.apt_ttl
        ttl = cap if ttl is None else min(ttl, cap)
        if ttl < 1:
            raise ValueError("token lifetime must be at least one tick")
        tx = self.runtime.commit(self.ledger, TxType.ATX_ACCESS_TOKEN, requester,
                                 {"record_uid": record_uid, "privilege": privilege.value,
                                  "badges": refs, "ttl": ttl,
                                  "public_key": requester.public_key})
        return _apt_ref(tx)

    def _on_access_token(self, tx: Transaction, where: Confirmed) -> None:
        f = tx.fields
        privilege = Privilege(f["privilege"])
        self._check_request(tx.submitter, f["record_uid"], privilege, f["badges"])
        member = self.ledger.membership[tx.submitter]
        if f["public_key"] != member.public_key:
            raise InvalidBadge("token key differs from the requester's registered key")
        token = AccessPermissionToken(_apt_ref(tx), tx.submitter, f["public_key"], privilege,
                                      f["record_uid"], tx.timestamp, tx.timestamp + f["ttl"])
        self.tokens[token.apt_ref] = token
        self.token_events.setdefault(token.record_uid, []).append(TransparencyEvent(
            "apt", token.apt_ref, token.requester, privilege, tx.timestamp, where.position))
        for listener in self.token_listeners:
            listener(token, where)

    def get_apt(self, apt_ref: str) -> AccessPermissionToken:
        try:
            return self.tokens[apt_ref]
        except KeyError:
            raise UnknownAPT(apt_ref) from None

    def _on_access_data(self, tx: Transaction, where: Confirmed) -> None:
        f = tx.fields
        token = self.get_apt(f["apt_ref"])
        if token.record_uid != f["record_uid"]:
            raise UnknownRecord(f["record_uid"])
        self.retrievals.setdefault(token.record_uid, []).append(TransparencyEvent(
            "retrieval", token.apt_ref, token.requester, token.privilege, f["tick"], where.position))

    def has_retrieved(self, requester: str, record_uid: str) -> bool:
        return any(e.requester == requester for e in self.retrievals.get(record_uid, ()))

    def transparency_report(self, owner: str, record_uid: str) -> list[TransparencyEvent]:
        record = self.record(record_uid)
        if record.owner != owner:
            raise NotOwner(f"{owner} does not own {record_uid}")
        events = self.token_events.get(record_uid, []) + self.retrievals.get(record_uid, [])
        return sorted(events, key=lambda e: (e.tick, e.position))


def _apt_ref(tx: Transaction) -> str:
    return "apt-" + tx.tx_id[:8].hex()
