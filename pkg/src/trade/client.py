"""Organization-side SDK that strings the contract calls into whole workflows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping

from .activity import DataRecord, Notification, Privilege, TransparencyEvent, normalize_keywords
from .encoding import decode, encode
from .errors import (
    AlreadySigned,
    ConsumptionPolicyRejected,
    DataAuthenticationFailed,
    InsertionFailed,
    InsufficientKarma,
    InvalidBadge,
    LegalSignatureRequired,
    MissingAttribute,
    NoActivePseudonym,
    NoSuchContract,
    NotOwner,
    TypeMismatch,
    error_for_code,
)
from .identity import Credential, OrganizationProfile
from .policy import PolicyKind, evaluate
from .server import M_ACCESS, M_INSERTION, M_OK, RetrievalRequest, authenticate_data

if TYPE_CHECKING:
    from .network import TradeNetwork


@dataclass(frozen=True)
class TradeHeader:
    apt_ref: str
    requester: str


@dataclass
class AcquireResult:
    payload: bytes
    header: TradeHeader
    new_badges: int


class ClientSession:
    def __init__(self, network: "TradeNetwork", real_name: str):
        self.network = network
        self.real_name = real_name
        self.credentials: list[Credential] = []
        self.badge_cache: dict[tuple[str, str], str] = {}
        self.interest_keywords: frozenset[str] = frozenset()
        self.consumption_policy: str | None = None
        self.last_result: AcquireResult | None = None
        self._next = 0

    # -- identities ------------------------------------------------------------

    @property
    def active_pseudonyms(self) -> list[Credential]:
        return [c for c in self.credentials if self.network.identity.is_active(c.address)]

    @property
    def primary(self) -> Credential:
        active = self.active_pseudonyms
        if not active:
            raise NoActivePseudonym(self.real_name)
        return active[0]

    def credential(self, address: str) -> Credential:
        for cred in self.credentials:
            if cred.address == address:
                return cred
        raise NotOwner(f"{address} does not belong to {self.real_name}")

    def register(self, registrar_id: str, profile: OrganizationProfile,
                 identity_tags: Iterable[str] = ()) -> str:
        cred = self.network.identity.register_organization(registrar_id, profile, identity_tags)
        self.credentials.append(cred)
        return cred.address

    def issue_temporary(self, registrar_id: str) -> str:
        cred = self.network.identity.issue_temporary_identity(registrar_id, self.real_name)
        self.credentials.append(cred)
        return cred.address

    def update_profile(self, profile: OrganizationProfile) -> int:
        return self.network.identity.update_profile(self.real_name, profile)

    # -- policies ----------------------------------------------------------------

    def create_policy(self, source: str, kind: PolicyKind = PolicyKind.SHARING,
                      description: str = "", grantees: Iterable[str] | None = None) -> str:
        return self.network.identity.deploy_policy(self.primary.signer, source, kind,
                                                   description, grantees)

    def set_consumption_policy(self, source: str, description: str = "") -> str:
        self.consumption_policy = self.create_policy(source, PolicyKind.CONSUMPTION, description)
        return self.consumption_policy

    def _policy_owner(self, policy_id: str) -> Credential:
        return self.credential(self.network.identity.policy(policy_id).owner)

    def grant_policy(self, policy_id: str, grantees: Iterable[str]) -> None:
        self.network.identity.grant_policy(self._policy_owner(policy_id).signer, policy_id, grantees)

    def delete_policy(self, policy_id: str) -> int:
        return self.network.identity.delete_policy(self._policy_owner(policy_id).signer, policy_id)

    # -- publishing --------------------------------------------------------------

    def insert_cti(self, payload: bytes, keywords: Iterable[str],
                   privilege_map: Mapping[Privilege, Iterable[str]], server_address: str,
                   description: str = "", legal_terms: str | None = None,
                   owner: str | None = None) -> str:
        cred = self.credential(owner) if owner else self.primary
        self.network.identity.require_active(cred.address)
        reply = decode(self.network.transport.request(server_address, encode(
            {"type": M_INSERTION, "owner": cred.address, "payload": payload})))
        if reply["type"] != M_OK:
            raise InsertionFailed(reply.get("message", "server refused the payload"))
        record = DataRecord(reply["record_uid"], cred.address,
                            {p: tuple(ids) for p, ids in privilege_map.items()},
                            reply["digest"], description, normalize_keywords(keywords),
                            server_address, legal_terms)
        return self.network.activity.publish_data(cred.signer, record)

    def subscribe(self, keywords: Iterable[str]) -> frozenset[str]:
        self.interest_keywords = self.network.activity.subscribe(self.primary.address, keywords)
        return self.interest_keywords

    # -- consuming ---------------------------------------------------------------

    def _pick(self) -> Credential:
        active = self.active_pseudonyms
        if not active:
            raise NoActivePseudonym(self.real_name)
        cred = active[self._next % len(active)]
        self._next += 1
        return cred

    def _consumption_attributes(self, record: DataRecord) -> dict:
        attrs = self.network.identity.public_attributes(record.owner)
        attrs["keywords"] = ",".join(sorted(record.keywords))
        attrs["description"] = record.description
        return attrs

    def _check_consumption(self, record: DataRecord) -> None:
        if self.consumption_policy is None:
            return
        doc = self.network.identity.policy(self.consumption_policy)
        try:
            ok = evaluate(doc.terms, self._consumption_attributes(record))
        except (MissingAttribute, TypeMismatch) as exc:
            raise ConsumptionPolicyRejected(f"{record.record_uid}: {exc}") from None
        if not ok:
            raise ConsumptionPolicyRejected(f"{record.record_uid} fails {doc.policy_id}")

    def _badges(self, cred: Credential, policy_ids: Iterable[str]) -> tuple[list[str], int]:
        identity = self.network.identity
        badges, minted = [], 0
        for policy_id in policy_ids:
            key = (cred.address, policy_id)
            ref = self.badge_cache.get(key)
            if ref is None:
                existing = identity.valid_badge_for(cred.address, policy_id)
                ref = identity.request_profile_badge(cred.signer, policy_id)
                if existing is None:
                    minted += 1
                self.badge_cache[key] = ref
            badges.append(ref)
        return badges, minted

    def acquire(self, record_uid: str, privilege: Privilege = Privilege.READ,
                ttl: int | None = None, via: str | None = None) -> bytes:
        net = self.network
        cred = self.credential(via) if via else self._pick()
        record = net.activity.record(record_uid)
        tag = net.incentives.contract_for_record(record_uid)
        if tag is not None and not tag.signed_by(cred.address):
            raise LegalSignatureRequired(f"{record_uid} requires signing {tag.contract_id}")
        self._check_consumption(record)
        paid = net.incentives.has_ticket(cred.address, record_uid)
        if not paid and not net.incentives.can_afford(cred.address):
            raise InsufficientKarma(f"{cred.address} cannot pay for {record_uid}")
        required = record.privilege_policy_map.get(privilege, ())
        badges, minted = self._badges(cred, required)
        if not paid:
            net.incentives.spend_on_consume(cred.signer, record_uid)
        try:
            apt_ref = net.activity.access_permission_request(cred.signer, record_uid, privilege,
                                                             badges, ttl)
        except InvalidBadge:
            for policy_id in required:
                self.badge_cache.pop((cred.address, policy_id), None)
            badges, more = self._badges(cred, required)
            minted += more
            apt_ref = net.activity.access_permission_request(cred.signer, record_uid, privilege,
                                                             badges, ttl)
        return self.retrieve(cred, record_uid, privilege, apt_ref, minted)

    def retrieve(self, cred: Credential, record_uid: str, privilege: Privilege, apt_ref: str,
                 minted: int = 0, tick: int | None = None) -> bytes:
        net = self.network
        now = net.clock.now if tick is None else tick
        request = RetrievalRequest(privilege, record_uid, apt_ref, now).signed(cred.signer)
        address = net.activity.navigate(record_uid)
        reply = decode(net.transport.request(address, encode(
            {"type": M_ACCESS, "request": request.to_fields()})))
        if reply["type"] != M_OK:
            raise error_for_code(reply["code"], reply.get("message", ""))
        payload = reply["payload"]
        if not authenticate_data(net.activity, payload, record_uid):
            raise DataAuthenticationFailed(f"payload of {record_uid} does not match its digest")
        self.last_result = AcquireResult(payload, TradeHeader(apt_ref, cred.address), minted)
        return payload

    def sign_legal_contract(self, record_uid: str, via: Iterable[str] | None = None) -> list[int]:
        """Sign the record's contract; by default every active pseudonym signs."""
        tag = self.network.incentives.contract_for_record(record_uid)
        if tag is None:
            raise NoSuchContract(f"{record_uid} carries no legal contract")
        if via:
            creds = [self.credential(a) for a in via]
        else:
            creds = [c for c in self.active_pseudonyms if not tag.signed_by(c.address)]
            if not creds:
                raise AlreadySigned(f"{self.real_name} already signed {tag.contract_id}")
        return [self.network.incentives.sign_legal_contract(c.signer, tag.contract_id)
                for c in creds]

    def rate(self, record_uid: str, stars: int):
        for cred in self.active_pseudonyms:
            if self.network.activity.has_retrieved(cred.address, record_uid) and \
                    (cred.address, record_uid) not in self.network.incentives.rated:
                return self.network.incentives.rate_contribution(cred.signer, record_uid, stars)
        return self.network.incentives.rate_contribution(self.primary.signer, record_uid, stars)

    # -- services ----------------------------------------------------------------

    def owned_cred(self, record_uid: str) -> Credential:
        return self.credential(self.network.activity.record(record_uid).owner)

    def transparency(self, record_uid: str) -> list[TransparencyEvent]:
        owner = self.network.activity.record(record_uid).owner
        if not any(c.address == owner for c in self.credentials):
            raise NotOwner(f"{self.real_name} does not own {record_uid}")
        return self.network.activity.transparency_report(owner, record_uid)

    def drain_notifications(self) -> list[Notification]:
        drained: list[Notification] = []
        for cred in self.credentials:
            drained.extend(self.network.activity.drain(cred.address))
        return drained

    def navigate(self, record_uid: str) -> str:
        return self.network.activity.navigate(record_uid)

    def search(self, keywords: Iterable[str]) -> list[str]:
        return self.network.activity.search(self.primary.address, keywords)
