"""Identity network contracts: registration, policy management, policy
validation, and the registrar consortium.

Contract state here is rebuilt purely from confirmed Identity-ledger
transactions (plus the contribution counters fed by the Activity network).
Real organization names never reach a payload; they live in each
registrar's :class:`IdentityMapping` store.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .crypto import Signer, address_of
from .encoding import digest
from .errors import (
    DuplicateVote,
    MissingAttribute,
    NotGranted,
    NotOwner,
    PolicyNotSatisfied,
    RevokedIdentity,
    TypeMismatch,
    UnknownIdentity,
    UnknownOrganization,
    UnknownPolicy,
    UnknownRegistrar,
    VerificationFailed,
)
from .ledger import Confirmed, Ledger, Network, Role, Transaction, TxType
from .policy import (
    PolicyDocument,
    PolicyKind,
    RuleNode,
    evaluate,
    parse_policy,
    print_policy,
    warn_if_vacuous,
)
from .runtime import Runtime

# Domains used by the advisory vacuity check at deployment time.
DEFAULT_DOMAINS: dict = {
    "employees": range(0, 10 ** 6 + 1),
    "size": range(0, 10 ** 4 + 1),
    "annual_revenue": range(0, 10 ** 12 + 1),
    "credit": range(0, 11),
    "credit_rate": range(0, 11),
    "cti_contribution": range(0, 10 ** 6 + 1),
    "gdpr": (True, False),
    "gdpr_compliant": (True, False),
}


class Status(Enum):
    ACTIVE = "Active"
    REVOKED = "Revoked"


class VoteAction(Enum):
    REVOKE = "Revoke"
    ADD_VIOLATION = "AddViolation"
    EXPOSE_IDENTITY = "ExposeIdentity"


@dataclass(frozen=True)
class OrganizationProfile:
    name: str
    employees: int
    annual_revenue: int
    hq_location: str
    extra_attrs: Mapping[str, object] = field(default_factory=dict)

    def attributes(self) -> dict:
        """Policy-visible attributes; the real name is deliberately absent."""
        attrs = dict(self.extra_attrs)
        attrs.update(employees=self.employees, annual_revenue=self.annual_revenue,
                     hq_location=self.hq_location)
        return attrs

    def updated(self, **changes) -> "OrganizationProfile":
        base = {"employees", "annual_revenue", "hq_location"}
        extras = dict(self.extra_attrs)
        direct = {}
        for key, value in changes.items():
            if key in base:
                direct[key] = value
            else:
                extras[key] = value
        return replace(self, extra_attrs=extras, **direct)


def default_verify_profile(profile: OrganizationProfile) -> bool:
    """Accept iff required text fields are non-empty and counts are non-negative."""
    if not isinstance(profile.name, str) or not profile.name.strip():
        return False
    if not isinstance(profile.hq_location, str) or not profile.hq_location.strip():
        return False
    for number in (profile.employees, profile.annual_revenue):
        if isinstance(number, bool) or not isinstance(number, int) or number < 0:
            return False
    return True


@dataclass
class PseudoIdentity:
    address: str
    public_key: bytes
    identity_tags: frozenset[str]
    cti_contribution: int
    status: Status
    issuer: str
    profile_id: str


@dataclass
class ProfileRecord:
    profile_id: str
    attributes: dict
    issuer: str
    violations: list[str] = field(default_factory=list)
    updated_at: tuple[int, int] = (-1, -1)


@dataclass
class ProfileBadge:
    badge_id: str
    holder: str
    policy_id: str
    valid: bool
    issued_at: tuple[int, int]
    tick: int


@dataclass
class IdentityMapping:
    real_name: str
    pseudo_addresses: list[str] = field(default_factory=list)
    profile_id: str = ""
    profile: OrganizationProfile | None = None
    identity_tags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Credential:
    """What an organization gets back: its pseudonym address and key."""

    address: str
    signer: Signer


class Registrar:
    """A consortium member with its private, off-chain identity store."""

    def __init__(self, registrar_id: str, signer: Signer):
        self.registrar_id = registrar_id
        self.signer = signer
        self.store: dict[str, IdentityMapping] = {}

    def profile_id_for(self, real_name: str) -> str:
        # Keyed by the registrar's secret so the id cannot be recomputed from
        # a guessed name.
        return "prof-" + digest(self.signer.sign(b"profile-id\x00" + real_name.encode()))[:10].hex()

    def owner_of(self, address: str) -> str | None:
        for mapping in self.store.values():
            if address in mapping.pseudo_addresses:
                return mapping.real_name
        return None

    def export_mappings(self) -> str:
        lines = []
        for name in sorted(self.store):
            for address in self.store[name].pseudo_addresses:
                lines.append(f"{name}\t{address}")
        return "".join(line + "\n" for line in lines)


def threshold(n: int) -> int:
    """Two-thirds majority, ceil(2n/3), in integer arithmetic."""
    if n < 1:
        raise ValueError("consortium needs at least one registrar")
    return (2 * n + 2) // 3


@dataclass
class VoteState:
    subject: str
    action: VoteAction
    voters: frozenset[str]
    threshold: int
    executed: bool
    exposed_name: str | None = None

    @property
    def pending(self) -> bool:
        return not self.executed


@dataclass
class _Case:
    voters: list[str] = field(default_factory=list)
    executed: bool = False
    reporter: str | None = None
    note: str = ""
    exposed_name: str | None = None


class Consortium:
    """Off-chain tally of registrar votes; runs the action exactly once."""

    def __init__(self, members: Iterable[str] = ()):
        self.members: list[str] = list(members)
        self.cases: dict[tuple[str, VoteAction], _Case] = {}

    def add_member(self, registrar_id: str) -> None:
        if registrar_id not in self.members:
            self.members.append(registrar_id)

    @property
    def threshold(self) -> int:
        return threshold(len(self.members))

    def vote(self, registrar_id: str, subject: str, action: VoteAction,
             execute: Callable[[_Case, str], str | None], reporter: str | None = None,
             note: str = "") -> VoteState:
        if registrar_id not in self.members:
            raise UnknownRegistrar(registrar_id)
        case = self.cases.setdefault((subject, action), _Case())
        if registrar_id in case.voters:
            raise DuplicateVote(f"{registrar_id} already voted {action.value} on {subject}")
        case.voters.append(registrar_id)
        if case.reporter is None and reporter is not None:
            case.reporter = reporter
        if note and not case.note:
            case.note = note
        if not case.executed and len(case.voters) >= self.threshold:
            case.exposed_name = execute(case, registrar_id)
            case.executed = True
        return self.state(subject, action)

    def state(self, subject: str, action: VoteAction) -> VoteState:
        case = self.cases.get((subject, action), _Case())
        return VoteState(subject, action, frozenset(case.voters), self.threshold,
                         case.executed, case.exposed_name)


class IdentityNetwork:
    """Registration (RC), policy management (PDC) and validation (PVC)."""

    def __init__(self, ledger: Ledger, runtime: Runtime,
                 verify_profile: Callable[[OrganizationProfile], bool] = default_verify_profile):
        if ledger.network is not Network.IDENTITY:
            raise ValueError("identity contracts need the Identity ledger")
        self.ledger = ledger
        self.runtime = runtime
        self.verify_profile = verify_profile
        self.registrars: dict[str, Registrar] = {}
        self.consortium = Consortium()
        self.profiles: dict[str, ProfileRecord] = {}
        self.pseudonyms: dict[str, PseudoIdentity] = {}
        self.policies: dict[str, PolicyDocument] = {}
        self.deleted_policies: set[str] = set()
        self.badges: dict[str, ProfileBadge] = {}
        self._badge_index: dict[tuple[str, str], str] = {}
        self.disclosures: dict[str, list[tuple[str, str]]] = {}
        self.domains = dict(DEFAULT_DOMAINS)
        self.reputation_of: Callable[[str], Fraction] = lambda _a: runtime.config.default_reputation
        self.pseudonym_listeners: list[Callable[[PseudoIdentity], None]] = []
        self._results: dict[bytes, object] = {}
        for tx_type, handler in (
                (TxType.TX_ORIGINAL, self._on_original),
                (TxType.TX_BLOCKCHAIN, self._on_blockchain),
                (TxType.TX_REVOCATION, self._on_revocation),
                (TxType.TX_VIOLATION, self._on_violation),
                (TxType.TX_EXPOSURE, self._on_exposure),
                (TxType.TX_POLICY, self._on_policy),
                (TxType.ITX_BADGE, self._on_badge)):
            ledger.on_confirm(tx_type, handler)

    # -- registrars -----------------------------------------------------------

    def add_registrar(self, registrar_id: str) -> Registrar:
        submitter = f"registrar:{registrar_id}"
        signer = Signer(submitter, self.runtime.keys.new_key(submitter))
        registrar = Registrar(registrar_id, signer)
        self.registrars[registrar_id] = registrar
        self.ledger.add_member(submitter, signer.public_key, Role.REGISTRAR)
        self.consortium.add_member(registrar_id)
        return registrar

    def registrar(self, registrar_id: str) -> Registrar:
        try:
            return self.registrars[registrar_id]
        except KeyError:
            raise UnknownRegistrar(registrar_id) from None

    def _find_mapping(self, real_name: str) -> tuple[Registrar, IdentityMapping]:
        for registrar in self.registrars.values():
            if real_name in registrar.store:
                return registrar, registrar.store[real_name]
        raise UnknownOrganization(real_name)

    # -- registration (RC) ----------------------------------------------------

    def _profile_fields(self, action: str, profile_id: str, profile: OrganizationProfile) -> dict:
        body = {"action": action, "profile_id": profile_id, "attributes": profile.attributes()}
        if self.runtime.config.leak_real_names:
            body["name"] = profile.name
        return body

    def _mint(self, registrar: Registrar, mapping: IdentityMapping) -> Credential:
        key = self.runtime.keys.new_key(f"pseudonym:{mapping.profile_id}")
        signer = Signer.pseudonym(key)
        fields = {
            "address": signer.submitter,
            "public_key": signer.public_key,
            "identity_tags": sorted(mapping.identity_tags),
            "cti_contribution": 0,
            "status": Status.ACTIVE.value,
            "issuer": registrar.registrar_id,
            "profile_id": mapping.profile_id,
        }
        if self.runtime.config.leak_real_names:
            fields["name"] = mapping.real_name
        self.runtime.commit(self.ledger, TxType.TX_BLOCKCHAIN, registrar.signer, fields)
        mapping.pseudo_addresses.append(signer.submitter)
        return Credential(signer.submitter, signer)

    def register_organization(self, registrar_id: str, profile: OrganizationProfile,
                              identity_tags: Iterable[str] = ()) -> Credential:
        registrar = self.registrar(registrar_id)
        if not self.verify_profile(profile):
            raise VerificationFailed(f"profile rejected by {registrar_id}")
        mapping = registrar.store.get(profile.name)
        if mapping is None:
            mapping = IdentityMapping(profile.name, profile_id=registrar.profile_id_for(profile.name))
        tags = frozenset(t.lower() for t in identity_tags) or mapping.identity_tags
        tx = self.runtime.commit(self.ledger, TxType.TX_ORIGINAL, registrar.signer,
                                 self._profile_fields("register", mapping.profile_id, profile))
        self._results.pop(tx.tx_id, None)
        mapping.profile = profile
        mapping.identity_tags = tags
        registrar.store[profile.name] = mapping
        return self._mint(registrar, mapping)

    def issue_temporary_identity(self, registrar_id: str, real_name: str) -> Credential:
        registrar = self.registrar(registrar_id)
        mapping = registrar.store.get(real_name)
        if mapping is None:
            raise UnknownOrganization(real_name)
        return self._mint(registrar, mapping)

    def update_profile(self, real_name: str, profile: OrganizationProfile) -> int:
        """Replace the stored profile; returns how many valid badges were revoked."""
        registrar, mapping = self._find_mapping(real_name)
        if not self.verify_profile(profile):
            raise VerificationFailed(f"updated profile rejected by {registrar.registrar_id}")
        tx = self.runtime.commit(self.ledger, TxType.TX_ORIGINAL, registrar.signer,
                                 self._profile_fields("update", mapping.profile_id, profile))
        mapping.profile = profile
        return int(self._results.pop(tx.tx_id, 0))

    on_profile_update = update_profile

    def _on_original(self, tx: Transaction, where: Confirmed) -> None:
        fields = tx.fields
        profile_id = fields["profile_id"]
        record = self.profiles.get(profile_id)
        if record is None:
            self.profiles[profile_id] = ProfileRecord(
                profile_id, dict(fields["attributes"]), _registrar_id(tx.submitter),
                updated_at=where.position)
            return
        changed = record.attributes != fields["attributes"]
        record.attributes = dict(fields["attributes"])
        if fields["action"] == "update" or changed:
            record.updated_at = where.position
            self._results[tx.tx_id] = self._revoke_badges(
                lambda b: self.pseudonyms[b.holder].profile_id == profile_id)

    def _on_blockchain(self, tx: Transaction, where: Confirmed) -> None:
        fields = tx.fields
        if address_of(fields["public_key"]) != fields["address"]:
            raise UnknownIdentity("address does not match public key")
        if fields["profile_id"] not in self.profiles:
            raise UnknownOrganization(fields["profile_id"])
        identity = PseudoIdentity(
            fields["address"], fields["public_key"], frozenset(fields["identity_tags"]),
            fields["cti_contribution"], Status(fields["status"]), fields["issuer"],
            fields["profile_id"])
        self.pseudonyms[identity.address] = identity
        self.ledger.add_member(identity.address, identity.public_key, Role.CLIENT)
        for listener in self.pseudonym_listeners:
            listener(identity)

    # -- lookups --------------------------------------------------------------

    def identity(self, address: str) -> PseudoIdentity:
        try:
            return self.pseudonyms[address]
        except KeyError:
            raise UnknownIdentity(address) from None

    def require_active(self, address: str) -> PseudoIdentity:
        identity = self.identity(address)
        if identity.status is not Status.ACTIVE:
            raise RevokedIdentity(address)
        return identity

    def is_active(self, address: str) -> bool:
        identity = self.pseudonyms.get(address)
        return identity is not None and identity.status is Status.ACTIVE

    def profile_attributes(self, address: str) -> dict:
        """The holder's profile as seen by policies, with derived attributes."""
        identity = self.identity(address)
        attrs = dict(self.profiles[identity.profile_id].attributes)
        attrs["cti_contribution"] = identity.cti_contribution
        attrs["reputation"] = self.reputation_of(address)
        return attrs

    def public_attributes(self, address: str) -> dict:
        """What anyone may learn about a pseudonym without the profile."""
        identity = self.identity(address)
        return {"identity_tags": ",".join(sorted(identity.identity_tags)),
                "cti_contribution": identity.cti_contribution,
                "reputation": self.reputation_of(address)}

    def record_contribution(self, address: str) -> None:
        identity = self.pseudonyms.get(address)
        if identity is not None:
            identity.cti_contribution += 1

    def aggregate_contribution(self, real_name: str) -> int:
        _, mapping = self._find_mapping(real_name)
        return sum(self.pseudonyms[a].cti_contribution for a in mapping.pseudo_addresses
                   if a in self.pseudonyms)

    def policy(self, policy_id: str) -> PolicyDocument:
        try:
            return self.policies[policy_id]
        except KeyError:
            raise UnknownPolicy(policy_id) from None

    def badge(self, badge_id: str) -> ProfileBadge | None:
        return self.badges.get(badge_id)

    def badges_of(self, holder: str) -> list[ProfileBadge]:
        return [b for b in self.badges.values() if b.holder == holder]

    def mapping_export(self) -> str:
        return "".join(r.export_mappings() for r in self.registrars.values())

    # -- policy management (PDC) ---------------------------------------------

    def deploy_policy(self, owner: Signer, terms: str | RuleNode,
                      kind: PolicyKind = PolicyKind.SHARING, description: str = "",
                      grantees: Iterable[str] | None = None) -> str:
        self.require_active(owner.submitter)
        node = parse_policy(terms) if isinstance(terms, str) else terms
        warn_if_vacuous(node, self.domains, self.runtime.config.domain_limit)
        fields = {"action": "create", "owner": owner.submitter, "kind": kind.value,
                  "description": description, "terms": print_policy(node),
                  "grantees": None if grantees is None else sorted(set(grantees))}
        tx = self.runtime.commit(self.ledger, TxType.TX_POLICY, owner, fields)
        return _policy_id(tx)

    def _owned(self, caller: Signer, policy_id: str) -> PolicyDocument:
        doc = self.policy(policy_id)
        if caller.submitter != doc.owner:
            raise NotOwner(f"{caller.submitter} does not own {policy_id}")
        return doc

    def modify_policy(self, caller: Signer, policy_id: str, terms: str | RuleNode | None = None,
                      description: str | None = None) -> PolicyDocument:
        doc = self._owned(caller, policy_id)
        fields = {"action": "modify", "policy_id": policy_id,
                  "description": doc.description if description is None else description,
                  "terms": None}
        if terms is not None:
            node = parse_policy(terms) if isinstance(terms, str) else terms
            warn_if_vacuous(node, self.domains, self.runtime.config.domain_limit)
            fields["terms"] = print_policy(node)
        self.runtime.commit(self.ledger, TxType.TX_POLICY, caller, fields)
        return self.policies[policy_id]

    def grant_policy(self, caller: Signer, policy_id: str, grantees: Iterable[str]) -> PolicyDocument:
        self._owned(caller, policy_id)
        self.runtime.commit(self.ledger, TxType.TX_POLICY, caller,
                            {"action": "grant", "policy_id": policy_id,
                             "grantees": sorted(set(grantees))})
        return self.policies[policy_id]

    def delete_policy(self, caller: Signer, policy_id: str) -> int:
        """Delete an owned policy; returns the number of badges invalidated."""
        self._owned(caller, policy_id)
        tx = self.runtime.commit(self.ledger, TxType.TX_POLICY, caller,
                                 {"action": "delete", "policy_id": policy_id})
        return int(self._results.pop(tx.tx_id, 0))

    def _on_policy(self, tx: Transaction, where: Confirmed) -> None:
        fields = tx.fields
        action = fields["action"]
        if action == "create":
            if not self.is_active(tx.submitter):
                raise RevokedIdentity(tx.submitter)
            grantees = fields["grantees"]
            doc = PolicyDocument(_policy_id(tx), tx.submitter, fields["description"],
                                 parse_policy(fields["terms"]), PolicyKind(fields["kind"]),
                                 None if grantees is None else frozenset(grantees))
            self.policies[doc.policy_id] = doc
            return
        doc = self.policies.get(fields["policy_id"])
        if doc is None:
            raise UnknownPolicy(fields["policy_id"])
        if tx.submitter != doc.owner:
            raise NotOwner(f"{tx.submitter} does not own {doc.policy_id}")
        if action == "delete":
            del self.policies[doc.policy_id]
            self.deleted_policies.add(doc.policy_id)
            self._results[tx.tx_id] = self._revoke_badges(lambda b: b.policy_id == doc.policy_id)
        elif action == "modify":
            changed = replace(doc, description=fields["description"])
            if fields["terms"] is not None:
                changed = replace(changed, terms=parse_policy(fields["terms"]))
            self.policies[doc.policy_id] = changed
            if changed.terms != doc.terms:
                self._revoke_badges(lambda b: b.policy_id == doc.policy_id)
        elif action == "grant":
            current = doc.grantees or frozenset()
            self.policies[doc.policy_id] = replace(doc, grantees=current | set(fields["grantees"]))
        else:
            raise UnknownPolicy(f"unsupported policy action {action!r}")

    # -- policy validation (PVC) ---------------------------------------------

    def _satisfies(self, holder: str, doc: PolicyDocument) -> bool:
        try:
            return evaluate(doc.terms, self.profile_attributes(holder))
        except (MissingAttribute, TypeMismatch):
            return False

    def _check_badge_request(self, holder: str, policy_id: str) -> PolicyDocument:
        self.require_active(holder)
        doc = self.policy(policy_id)
        if not doc.may_reference(holder):
            raise NotGranted(f"{holder} may not use {policy_id}")
        return doc

    def valid_badge_for(self, holder: str, policy_id: str) -> str | None:
        badge_id = self._badge_index.get((holder, policy_id))
        if badge_id is not None and self.badges[badge_id].valid:
            return badge_id
        return None

    def request_profile_badge(self, holder: Signer, policy_id: str) -> str:
        doc = self._check_badge_request(holder.submitter, policy_id)
        existing = self.valid_badge_for(holder.submitter, policy_id)
        if existing is not None:
            return existing
        if not self._satisfies(holder.submitter, doc):
            raise PolicyNotSatisfied(f"profile of {holder.submitter} fails {policy_id}")
        tx = self.runtime.commit(self.ledger, TxType.ITX_BADGE, holder,
                                 {"holder": holder.submitter, "policy_id": policy_id})
        return _badge_id(tx)

    def _on_badge(self, tx: Transaction, where: Confirmed) -> None:
        fields = tx.fields
        holder = fields["holder"]
        if holder != tx.submitter:
            raise NotOwner("badges are requested by their holder")
        doc = self._check_badge_request(holder, fields["policy_id"])
        if not self._satisfies(holder, doc):
            raise PolicyNotSatisfied(f"profile of {holder} fails {doc.policy_id}")
        badge = ProfileBadge(_badge_id(tx), holder, doc.policy_id, True, where.position, tx.timestamp)
        self.badges[badge.badge_id] = badge
        self._badge_index[(holder, doc.policy_id)] = badge.badge_id

    def _revoke_badges(self, selector: Callable[[ProfileBadge], bool]) -> int:
        count = 0
        for badge in self.badges.values():
            if badge.valid and selector(badge):
                badge.valid = False
                count += 1
        return count

    # -- consortium ------------------------------------------------------------

    def consortium_vote(self, registrar_id: str, subject: str, action: VoteAction,
                        reporter: str | None = None, note: str = "") -> VoteState:
        self.registrar(registrar_id)
        self.identity(subject)
        if action is VoteAction.EXPOSE_IDENTITY and reporter is None:
            existing = self.consortium.cases.get((subject, action))
            if existing is None or existing.reporter is None:
                raise UnknownIdentity("exposure needs the reporting pseudonym")

        def execute(case: _Case, final_voter: str) -> str | None:
            signer = self.registrars[final_voter].signer
            voters = sorted(case.voters)
            if action is VoteAction.REVOKE:
                self.runtime.commit(self.ledger, TxType.TX_REVOCATION, signer,
                                    {"subject": subject, "voters": voters})
                return None
            if action is VoteAction.ADD_VIOLATION:
                self.runtime.commit(self.ledger, TxType.TX_VIOLATION, signer,
                                    {"subject": subject, "note": case.note, "voters": voters})
                return None
            name = self.expose(subject)
            self.runtime.commit(self.ledger, TxType.TX_EXPOSURE, signer,
                                {"subject": subject, "reporter": case.reporter, "voters": voters})
            self.disclosures.setdefault(case.reporter, []).append((subject, name))
            return name

        return self.consortium.vote(registrar_id, subject, action, execute, reporter, note)

    def expose(self, subject: str) -> str:
        """Off-chain lookup of the real name behind a pseudonym."""
        for registrar in self.registrars.values():
            name = registrar.owner_of(subject)
            if name is not None:
                return name
        raise UnknownIdentity(subject)

    def _on_revocation(self, tx: Transaction, where: Confirmed) -> None:
        identity = self.identity(tx.fields["subject"])
        identity.status = Status.REVOKED
        self._revoke_badges(lambda b: b.holder == identity.address)

    def _on_violation(self, tx: Transaction, where: Confirmed) -> None:
        identity = self.identity(tx.fields["subject"])
        self.profiles[identity.profile_id].violations.append(tx.fields["note"])

    def _on_exposure(self, tx: Transaction, where: Confirmed) -> None:
        self.identity(tx.fields["subject"])


def _registrar_id(submitter: str) -> str:
    return submitter.split(":", 1)[1] if submitter.startswith("registrar:") else submitter


def _policy_id(tx: Transaction) -> str:
    return "pol-" + tx.tx_id[:8].hex()


def _badge_id(tx: Transaction) -> str:
    return "pb-" + tx.tx_id[:8].hex()
