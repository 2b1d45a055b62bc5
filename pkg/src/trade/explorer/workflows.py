"""Executable encodings of the four protocol workflows.

Each model keeps per-role control labels, a message channel (a sorted tuple
used as a multiset), the transaction pools and the confirmed sets of both
ledgers.  Guards and off-chain effects call the same predicates the live
contracts use: profile verification, policy parsing and evaluation, the
server's payload bounds and token checks, and the ledger permission table.

Deliberate departures from a literal reading of the state machines:

* receiving a message consumes it, and receive actions are also guarded by
  the receiver's control label, so a stale reply cannot fire twice;
* after receiving its identity, an organization returns to ``O_Waiting``
  and lets ``Preparation`` pick the next queued request;
* ``Setup`` is the step that fills the request queues;
* a consumer requests its token only once its badge is confirmed, and
  contacts the server only once its token is confirmed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple

from ..activity import AccessPermissionToken, Privilege
from ..identity import OrganizationProfile, default_verify_profile
from ..ledger import Network, Role, TxType, is_permitted, network_types
from ..policy import evaluate, parse_policy
from ..server import RetrievalRequest, check_token, payload_acceptable
from .core import Transition

O_WAITING = "O_Waiting"
O_REGISTER = "O_Register"
O_RECEIVE = "O_ReceiveBlockchainIdentity"
O_CREATE_POLICY = "O_CreatePolicy"
O_INSERT = "O_Insert"
O_ASSOCIATE = "O_AssociatePolicy"
O_FINAL = "O_Final"
ORG_LABELS = frozenset({O_WAITING, O_REGISTER, O_RECEIVE, O_CREATE_POLICY, O_INSERT,
                        O_ASSOCIATE, O_FINAL})

R_WAITING = "R_Waiting"
R_VERIFICATION = "R_Verification"
R_CREATE = "R_BlockchainIdentityCreation"
R_SAVE = "R_SaveMapping"
REGISTRAR_LABELS = frozenset({R_WAITING, R_VERIFICATION, R_CREATE, R_SAVE})

S_WAITING = "S_Waiting"
SERVER_LABELS = frozenset({S_WAITING})

C_WAITING = "C_Waiting"
C_META = "C_RequestMetaData"
C_BADGE = "C_CreateBadge"
C_TOKEN = "C_RequestToken"
C_ACCESS = "C_AccessServer"
C_VALIDATE = "C_ValidateAccess"
C_FINAL = "C_Final"
CONSUMER_LABELS = frozenset({C_WAITING, C_META, C_BADGE, C_TOKEN, C_ACCESS, C_VALIDATE, C_FINAL})

M_VERIFICATION = "M_Verification"
M_NO = "M_NO"
M_OK = "M_OK"
M_IDENTITY = "M_Identity"
M_INSERTION = "M_Insertion"
M_ACCESS = "M_Access"
MESSAGE_TYPES = frozenset({M_VERIFICATION, M_NO, M_OK, M_IDENTITY, M_INSERTION, M_ACCESS})


class Msg(NamedTuple):
    src: str
    dst: str
    type: str
    data: tuple


class Tx(NamedTuple):
    type: str
    who: str
    item: tuple


def _add(bag: tuple, *items) -> tuple:
    return tuple(sorted(bag + items))


def _remove(bag: tuple, item) -> tuple:
    as_list = list(bag)
    as_list.remove(item)
    return tuple(as_list)


def _set(seq: tuple, i: int, value) -> tuple:
    return seq[:i] + (value,) + seq[i + 1:]


@dataclass(frozen=True)
class ExploreConfig:
    orgs: int = 1
    registrars: int = 1
    servers: int = 1
    consumers: int = 1
    pool: int = 1
    # Feed the workflow an input the real checks reject.
    failure: bool = False
    # Explore both outcomes of every off-chain check regardless of input.
    inject_failures: bool = False


class Effects:
    """Outcome sets for the off-chain functions the models abstract."""

    def __init__(self, inject_failures: bool = False):
        self.inject_failures = inject_failures

    def outcomes(self, real: bool) -> tuple[bool, ...]:
        return (True, False) if self.inject_failures else (real,)

    def verify_profile(self, profile: OrganizationProfile) -> tuple[bool, ...]:
        return self.outcomes(default_verify_profile(profile))

    def insert_cti(self, size: int) -> tuple[bool, ...]:
        return self.outcomes(payload_acceptable(size))

    def verify_access(self, token: AccessPermissionToken, req: RetrievalRequest,
                      now: int) -> tuple[bool, ...]:
        return self.outcomes(check_token(token, req, now, _abstract_verify) is None)

    def satisfies(self, terms_source: str, attrs: dict) -> tuple[bool, ...]:
        return self.outcomes(evaluate(parse_policy(terms_source), attrs))


def _abstract_verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    return signature == b"signed-by:" + public_key


def _role(who: str) -> Role:
    if who.startswith("R"):
        return Role.REGISTRAR
    if who.startswith("S"):
        return Role.SERVER
    return Role.CLIENT


def confirmable(network: Network, tx: Tx, valid_types: Iterable[TxType]) -> bool:
    tx_type = TxType.from_tag(tx.type)
    return (tx_type in valid_types and tx_type in network_types(network)
            and is_permitted(network, _role(tx.who), tx_type))


def _partition_violations(network: Network, block: tuple) -> list[str]:
    return [f"{tx.type} by {tx.who} confirmed on {network.value}" for tx in block
            if not is_permitted(network, _role(tx.who), TxType.from_tag(tx.type))]


# -- registration ----------------------------------------------------------------

VALID_PROFILE = OrganizationProfile("org", 250, 10 ** 6, "EU")
INVALID_PROFILE = OrganizationProfile("", 250, 10 ** 6, "EU")


@dataclass(frozen=True)
class RegistrationState:
    setup: bool
    o_state: tuple
    o_buffer: tuple
    o_identity: tuple
    r_state: tuple
    r_buffer: tuple
    pool: tuple
    channel: tuple
    itx_pool: tuple
    iblock: tuple
    verdicts: tuple
    mappings: tuple


class RegistrationWorkflow:
    name = "registration"
    valid_types = (TxType.TX_ORIGINAL, TxType.TX_BLOCKCHAIN)

    def __init__(self, config: ExploreConfig = ExploreConfig()):
        self.config = config
        self.orgs = tuple(f"O{i + 1}" for i in range(config.orgs))
        self.registrars = tuple(f"R{i + 1}" for i in range(config.registrars))
        self.effects = Effects(config.inject_failures)
        self.profile = INVALID_PROFILE if config.failure else VALID_PROFILE
        if config.failure:
            self.name = "registration-failure"

    def initial_states(self):
        n, m = len(self.orgs), len(self.registrars)
        yield RegistrationState(False, (O_WAITING,) * n, (None,) * n, ((),) * n,
                                (R_WAITING,) * m, (None,) * m, (), (), (), (), (), ())

    def successors(self, s: RegistrationState):
        out = []
        if not s.setup:
            pool = tuple(range(self.config.pool * len(self.orgs)))
            return [(Transition("Setup"), replace(s, setup=True, pool=pool))]
        for i, o in enumerate(self.orgs):
            st = s.o_state[i]
            if st == O_WAITING:
                if s.pool:
                    out.append((Transition("Preparation", o), replace(
                        s, o_buffer=_set(s.o_buffer, i, s.pool[0]), pool=s.pool[1:],
                        o_state=_set(s.o_state, i, O_REGISTER))))
                else:
                    out.append((Transition("Preparation", o),
                                replace(s, o_state=_set(s.o_state, i, O_FINAL))))
            if st == O_REGISTER:
                for j, r in enumerate(self.registrars):
                    if s.r_state[j] == R_WAITING:
                        msg = Msg(o, r, M_VERIFICATION, (o, s.o_buffer[i]))
                        out.append((Transition("Register", o, r), replace(
                            s, channel=_add(s.channel, msg),
                            o_state=_set(s.o_state, i, O_RECEIVE))))
            for msg in sorted(set(s.channel)):
                if msg.dst != o or st != O_RECEIVE:
                    continue
                channel = _remove(s.channel, msg)
                if msg.type == M_NO:
                    out.append((Transition("VerificationFailed", o), replace(
                        s, channel=channel, o_state=_set(s.o_state, i, O_FINAL))))
                elif msg.type == M_IDENTITY:
                    nxt = O_WAITING if s.pool else O_FINAL
                    got = _add(s.o_identity[i], msg.data[0])
                    out.append((Transition("ReceiveBlockchainIdentity", o), replace(
                        s, channel=channel, o_state=_set(s.o_state, i, nxt),
                        o_identity=_set(s.o_identity, i, got))))
        for j, r in enumerate(self.registrars):
            st = s.r_state[j]
            if st == R_WAITING:
                for msg in sorted(set(s.channel)):
                    if msg.dst != r or msg.type != M_VERIFICATION:
                        continue
                    channel = _remove(s.channel, msg)
                    for ok in self.effects.verify_profile(self.profile):
                        verdicts = _add(s.verdicts, (msg.data[0], msg.data[1], ok))
                        if ok:
                            nxt = replace(s, channel=channel, verdicts=verdicts,
                                          r_buffer=_set(s.r_buffer, j, msg.data),
                                          r_state=_set(s.r_state, j, R_CREATE))
                        else:
                            nxt = replace(s, verdicts=verdicts, channel=_add(
                                channel, Msg(r, msg.data[0], M_NO, ())))
                        out.append((Transition("Verification", r, "ok" if ok else "no"), nxt))
            elif st == R_CREATE:
                item = s.r_buffer[j]
                txs = (Tx(TxType.TX_ORIGINAL.tag, r, item), Tx(TxType.TX_BLOCKCHAIN.tag, r, item))
                out.append((Transition("BlockchainIdentityCreation", r), replace(
                    s, itx_pool=_add(s.itx_pool, *txs), r_state=_set(s.r_state, j, R_SAVE))))
            elif st == R_SAVE:
                org, item = s.r_buffer[j]
                out.append((Transition("SaveMapping", r), replace(
                    s, mappings=_add(s.mappings, (r, org, item)),
                    channel=_add(s.channel, Msg(r, org, M_IDENTITY, (item,))),
                    r_buffer=_set(s.r_buffer, j, None), r_state=_set(s.r_state, j, R_WAITING))))
        out.extend(_confirm_steps(s, "itx_pool", "iblock", Network.IDENTITY, self.valid_types,
                                  "ConfirmReceipt"))
        return out

    def all_final(self, s: RegistrationState) -> bool:
        return s.setup and all(st == O_FINAL for st in s.o_state)

    def invariant(self, s: RegistrationState) -> list[str]:
        problems = _label_violations(s.o_state, ORG_LABELS) + _label_violations(
            s.r_state, REGISTRAR_LABELS) + _channel_violations(s.channel)
        problems += _exclusivity(s.itx_pool, s.iblock)
        problems += _partition_violations(Network.IDENTITY, s.iblock)
        return problems

    def final_check(self, s: RegistrationState) -> list[str]:
        problems = []
        for i, o in enumerate(self.orgs):
            accepted = tuple(sorted(item for org, item, ok in s.verdicts if org == o and ok))
            if s.o_identity[i] != accepted:
                problems.append(f"{o} holds identities {s.o_identity[i]} but verified {accepted}")
        for org, item, ok in s.verdicts:
            on_chain = {tx.type for tx in s.iblock if tx.item == (org, item)}
            expected = {TxType.TX_ORIGINAL.tag, TxType.TX_BLOCKCHAIN.tag} if ok else set()
            if on_chain != expected:
                problems.append(f"{org}/{item} has ledger records {sorted(on_chain)}")
        if s.itx_pool or s.channel:
            problems.append("pending transactions or messages at termination")
        return problems


# -- policy creation -------------------------------------------------------------

POLICY_SOURCES = ("(employees >= 100)", '(hq_location = "EU") OR (annual_revenue >= 1000000)',
                  "(gdpr = true) AND (employees < 5000)")


@dataclass(frozen=True)
class PolicyState:
    setup: bool
    o_state: tuple
    o_buffer: tuple
    pool: tuple
    itx_pool: tuple
    iblock: tuple


class PolicyCreationWorkflow:
    name = "policy-creation"
    valid_types = (TxType.TX_POLICY,)

    def __init__(self, config: ExploreConfig = ExploreConfig(pool=2)):
        self.config = config
        self.orgs = tuple(f"O{i + 1}" for i in range(config.orgs))

    def initial_states(self):
        n = len(self.orgs)
        yield PolicyState(False, (O_WAITING,) * n, (None,) * n, (), (), ())

    def successors(self, s: PolicyState):
        if not s.setup:
            pool = tuple(range(self.config.pool))
            return [(Transition("Setup"), replace(s, setup=True, pool=pool))]
        out = []
        for i, o in enumerate(self.orgs):
            st = s.o_state[i]
            if st == O_WAITING:
                if s.pool:
                    out.append((Transition("Preparation", o), replace(
                        s, o_buffer=_set(s.o_buffer, i, s.pool[0]), pool=s.pool[1:],
                        o_state=_set(s.o_state, i, O_CREATE_POLICY))))
                else:
                    out.append((Transition("Preparation", o),
                                replace(s, o_state=_set(s.o_state, i, O_FINAL))))
            elif st == O_CREATE_POLICY:
                item = s.o_buffer[i]
                source = POLICY_SOURCES[item % len(POLICY_SOURCES)]
                parse_policy(source)
                out.append((Transition("CreatePolicy", o), replace(
                    s, itx_pool=_add(s.itx_pool, Tx(TxType.TX_POLICY.tag, o, (item, source))),
                    o_state=_set(s.o_state, i, O_WAITING))))
        out.extend(_confirm_steps(s, "itx_pool", "iblock", Network.IDENTITY, self.valid_types,
                                  "ConfirmReceipt"))
        return out

    def all_final(self, s: PolicyState) -> bool:
        return s.setup and all(st == O_FINAL for st in s.o_state)

    def invariant(self, s: PolicyState) -> list[str]:
        return (_label_violations(s.o_state, ORG_LABELS) + _exclusivity(s.itx_pool, s.iblock)
                + _partition_violations(Network.IDENTITY, s.iblock))

    def final_check(self, s: PolicyState) -> list[str]:
        stored = sorted(tx.item[0] for tx in s.iblock)
        if stored != list(range(self.config.pool)) or s.itx_pool:
            return [f"policies on chain {stored}, expected all {self.config.pool}"]
        return []


# -- CTI insertion ---------------------------------------------------------------

PAYLOAD_SIZE = 1024


@dataclass(frozen=True)
class InsertionState:
    setup: bool
    o_state: tuple
    o_buffer: tuple
    s_state: tuple
    stored: tuple
    pool: tuple
    channel: tuple
    atx_pool: tuple
    ablock: tuple
    outcomes: tuple


class InsertionWorkflow:
    name = "cti-insertion"
    valid_types = (TxType.ATX_CYBER_THREAT,)

    def __init__(self, config: ExploreConfig = ExploreConfig()):
        self.config = config
        self.orgs = tuple(f"O{i + 1}" for i in range(config.orgs))
        self.servers = tuple(f"S{i + 1}" for i in range(config.servers))
        self.effects = Effects(config.inject_failures)
        self.size = 0 if config.failure else PAYLOAD_SIZE
        if config.failure:
            self.name = "cti-insertion-failure"

    def initial_states(self):
        n, m = len(self.orgs), len(self.servers)
        yield InsertionState(False, (O_WAITING,) * n, (None,) * n, (S_WAITING,) * m, (), (),
                             (), (), (), ())

    def successors(self, s: InsertionState):
        if not s.setup:
            pool = tuple(range(self.config.pool * len(self.orgs)))
            return [(Transition("Setup"), replace(s, setup=True, pool=pool))]
        out = []
        for i, o in enumerate(self.orgs):
            st = s.o_state[i]
            if st == O_WAITING:
                if s.pool:
                    out.append((Transition("Preparation", o), replace(
                        s, o_buffer=_set(s.o_buffer, i, s.pool[0]), pool=s.pool[1:],
                        o_state=_set(s.o_state, i, O_INSERT))))
                else:
                    out.append((Transition("Preparation", o),
                                replace(s, o_state=_set(s.o_state, i, O_FINAL))))
            elif st == O_INSERT:
                for j, srv in enumerate(self.servers):
                    if s.s_state[j] == S_WAITING:
                        msg = Msg(o, srv, M_INSERTION, (o, s.o_buffer[i], self.size))
                        out.append((Transition("InsertCyberInformation", o, srv), replace(
                            s, channel=_add(s.channel, msg),
                            o_state=_set(s.o_state, i, O_ASSOCIATE))))
            elif st == O_ASSOCIATE:
                for msg in sorted(set(s.channel)):
                    if msg.dst != o:
                        continue
                    channel = _remove(s.channel, msg)
                    if msg.type == M_NO:
                        out.append((Transition("InsertionFailed", o), replace(
                            s, channel=channel, o_state=_set(s.o_state, i, O_FINAL))))
                    elif msg.type == M_OK:
                        tx = Tx(TxType.ATX_CYBER_THREAT.tag, o, (o, s.o_buffer[i], "POLICY_ID"))
                        out.append((Transition("PolicyAssociation", o), replace(
                            s, channel=channel, atx_pool=_add(s.atx_pool, tx),
                            o_state=_set(s.o_state, i, O_WAITING))))
        for j, srv in enumerate(self.servers):
            if s.s_state[j] != S_WAITING:
                continue
            for msg in sorted(set(s.channel)):
                if msg.dst != srv or msg.type != M_INSERTION:
                    continue
                org, item, size = msg.data
                channel = _remove(s.channel, msg)
                for ok in self.effects.insert_cti(size):
                    reply = Msg(srv, org, M_OK if ok else M_NO, ())
                    stored = _add(s.stored, (srv, org, item)) if ok else s.stored
                    out.append((Transition("Insertion", srv, "ok" if ok else "no"), replace(
                        s, channel=_add(channel, reply), stored=stored,
                        outcomes=_add(s.outcomes, (org, item, ok)))))
        out.extend(_confirm_steps(s, "atx_pool", "ablock", Network.ACTIVITY, self.valid_types,
                                  "ConfirmReceipt"))
        return out

    def all_final(self, s: InsertionState) -> bool:
        return s.setup and all(st == O_FINAL for st in s.o_state)

    def invariant(self, s: InsertionState) -> list[str]:
        return (_label_violations(s.o_state, ORG_LABELS) + _label_violations(s.s_state, SERVER_LABELS)
                + _channel_violations(s.channel) + _exclusivity(s.atx_pool, s.ablock)
                + _partition_violations(Network.ACTIVITY, s.ablock))

    def final_check(self, s: InsertionState) -> list[str]:
        problems = []
        stored = {(org, item) for _, org, item in s.stored}
        associated = {(tx.item[0], tx.item[1]) for tx in s.ablock}
        if stored != associated:
            problems.append(f"stored {sorted(stored)} but associated {sorted(associated)}")
        if s.atx_pool or s.channel:
            problems.append("pending transactions or messages at termination")
        return problems


# -- access authorization --------------------------------------------------------

BADGE_POLICY = "(employees >= 100)"
SATISFYING = {"employees": 250}
UNSATISFYING = {"employees": 50}
ISSUANCE_TICK = 0
TTL = 100


@dataclass(frozen=True)
class AccessState:
    setup: bool
    c_state: tuple
    c_info: tuple
    c_badge: tuple
    c_result: tuple
    s_state: tuple
    pool: tuple
    channel: tuple
    itx_pool: tuple
    iblock: tuple
    atx_pool: tuple
    ablock: tuple


class AccessWorkflow:
    name = "access-authorization"
    valid_identity = (TxType.ITX_BADGE,)
    valid_activity = (TxType.ATX_ACCESS_TOKEN,)
    record = Tx(TxType.ATX_CYBER_THREAT.tag, "ORGANIZATION", ("CID", BADGE_POLICY))

    def __init__(self, config: ExploreConfig = ExploreConfig()):
        self.config = config
        self.consumers = tuple(f"C{i + 1}" for i in range(config.consumers))
        self.servers = tuple(f"S{i + 1}" for i in range(config.servers))
        self.effects = Effects(config.inject_failures)
        self.profile = UNSATISFYING if config.failure else SATISFYING
        if config.failure:
            self.name = "access-authorization-badge-failure"

    def initial_states(self):
        n, m = len(self.consumers), len(self.servers)
        yield AccessState(False, (C_WAITING,) * n, (None,) * n, (None,) * n, (None,) * n,
                          (S_WAITING,) * m, (), (), (), (), (), ())

    def _token(self, consumer: str) -> AccessPermissionToken:
        return AccessPermissionToken(f"TOKEN-{consumer}", consumer, consumer.encode(),
                                     Privilege.READ, "CID", ISSUANCE_TICK, ISSUANCE_TICK + TTL)

    def _request(self, consumer: str) -> RetrievalRequest:
        return RetrievalRequest(Privilege.READ, "CID", f"TOKEN-{consumer}", ISSUANCE_TICK,
                                b"signed-by:" + consumer.encode())

    def successors(self, s: AccessState):
        if not s.setup:
            pool = tuple(range(self.config.pool * len(self.consumers)))
            return [(Transition("Setup"), replace(s, setup=True, pool=pool,
                                                  ablock=(self.record,)))]
        out = []
        for i, c in enumerate(self.consumers):
            st = s.c_state[i]
            if st == C_WAITING:
                if s.pool:
                    out.append((Transition("Preparation", c), replace(
                        s, pool=s.pool[1:], c_state=_set(s.c_state, i, C_META))))
                else:
                    out.append((Transition("Preparation", c),
                                replace(s, c_state=_set(s.c_state, i, C_FINAL))))
            elif st == C_META:
                for tx in s.ablock:
                    if tx.type == TxType.ATX_CYBER_THREAT.tag and tx.who == "ORGANIZATION":
                        out.append((Transition("RequestMetaData", c), replace(
                            s, c_info=_set(s.c_info, i, tx.item),
                            c_state=_set(s.c_state, i, C_BADGE))))
            elif st == C_BADGE:
                terms = s.c_info[i][1]
                for ok in self.effects.satisfies(terms, self.profile):
                    tx = Tx(TxType.ITX_BADGE.tag, c, (f"BADGE-{c}", ok))
                    out.append((Transition("CreateBadge", c, "valid" if ok else "invalid"), replace(
                        s, itx_pool=_add(s.itx_pool, tx), c_badge=_set(s.c_badge, i, ok),
                        c_state=_set(s.c_state, i, C_TOKEN))))
            elif st == C_TOKEN:
                badge = Tx(TxType.ITX_BADGE.tag, c, (f"BADGE-{c}", s.c_badge[i]))
                if badge in s.iblock:
                    if s.c_badge[i]:
                        tx = Tx(TxType.ATX_ACCESS_TOKEN.tag, c, (f"TOKEN-{c}", f"BADGE-{c}"))
                        out.append((Transition("RequestToken", c, "valid"), replace(
                            s, atx_pool=_add(s.atx_pool, tx),
                            c_state=_set(s.c_state, i, C_ACCESS))))
                    else:
                        out.append((Transition("RequestToken", c, "invalid"), replace(
                            s, c_result=_set(s.c_result, i, "rejected"),
                            c_state=_set(s.c_state, i, C_FINAL))))
            elif st == C_ACCESS:
                token = Tx(TxType.ATX_ACCESS_TOKEN.tag, c, (f"TOKEN-{c}", f"BADGE-{c}"))
                if token in s.ablock:
                    for j, srv in enumerate(self.servers):
                        msg = Msg(c, srv, M_ACCESS, (f"TOKEN-{c}", "CID"))
                        out.append((Transition("AccessServer", c, srv), replace(
                            s, channel=_add(s.channel, msg),
                            c_state=_set(s.c_state, i, C_VALIDATE))))
            elif st == C_VALIDATE:
                for msg in sorted(set(s.channel)):
                    if msg.dst != c:
                        continue
                    channel = _remove(s.channel, msg)
                    if msg.type == M_NO:
                        out.append((Transition("VerificationFailed", c), replace(
                            s, channel=channel, c_result=_set(s.c_result, i, "denied"),
                            c_state=_set(s.c_state, i, C_FINAL))))
                    elif msg.type == M_OK:
                        out.append((Transition("AccessCTI", c), replace(
                            s, channel=channel, c_result=_set(s.c_result, i, "accessed"),
                            c_state=_set(s.c_state, i, C_FINAL))))
        for j, srv in enumerate(self.servers):
            if s.s_state[j] != S_WAITING:
                continue
            for msg in sorted(set(s.channel)):
                if msg.dst != srv or msg.type != M_ACCESS:
                    continue
                consumer = msg.src
                channel = _remove(s.channel, msg)
                for ok in self.effects.verify_access(self._token(consumer),
                                                     self._request(consumer), ISSUANCE_TICK):
                    reply = Msg(srv, consumer, M_OK if ok else M_NO, ())
                    out.append((Transition("ValidateRequest", srv, "ok" if ok else "no"),
                                replace(s, channel=_add(channel, reply))))
        out.extend(_confirm_steps(s, "itx_pool", "iblock", Network.IDENTITY, self.valid_identity,
                                  "IConfirmReceipt"))
        out.extend(_confirm_steps(s, "atx_pool", "ablock", Network.ACTIVITY, self.valid_activity,
                                  "AConfirmReceipt"))
        return out

    def all_final(self, s: AccessState) -> bool:
        return s.setup and all(st == C_FINAL for st in s.c_state)

    def invariant(self, s: AccessState) -> list[str]:
        problems = (_label_violations(s.c_state, CONSUMER_LABELS)
                    + _label_violations(s.s_state, SERVER_LABELS) + _channel_violations(s.channel)
                    + _exclusivity(s.itx_pool, s.iblock) + _exclusivity(s.atx_pool, s.ablock)
                    + _partition_violations(Network.IDENTITY, s.iblock)
                    + _partition_violations(Network.ACTIVITY, s.ablock))
        for tx in s.ablock + s.atx_pool:
            if tx.type == TxType.ATX_ACCESS_TOKEN.tag:
                badge = Tx(TxType.ITX_BADGE.tag, tx.who, (tx.item[1], True))
                if badge not in s.iblock:
                    problems.append(f"token {tx.item[0]} without a confirmed valid badge")
        return problems

    def final_check(self, s: AccessState) -> list[str]:
        problems = []
        for i, c in enumerate(self.consumers):
            result = s.c_result[i]
            if result == "accessed" and not s.c_badge[i]:
                problems.append(f"{c} accessed data without a valid badge")
            if result in ("accessed", "denied"):
                token = Tx(TxType.ATX_ACCESS_TOKEN.tag, c, (f"TOKEN-{c}", f"BADGE-{c}"))
                if token not in s.ablock:
                    problems.append(f"{c} reached the server without a confirmed token")
        if s.itx_pool or s.atx_pool or s.channel:
            problems.append("pending transactions or messages at termination")
        return problems


# -- shared helpers --------------------------------------------------------------

def _confirm_steps(s, pool_field: str, block_field: str, network: Network,
                   valid_types, label: str):
    pool = getattr(s, pool_field)
    block = getattr(s, block_field)
    out = []
    for tx in sorted(set(pool)):
        if confirmable(network, tx, valid_types):
            out.append((Transition(label, "", tx.type), replace(
                s, **{pool_field: _remove(pool, tx), block_field: _add(block, tx)})))
    return out


def _label_violations(labels: tuple, allowed: frozenset) -> list[str]:
    return [f"unknown label {label}" for label in labels if label not in allowed]


def _channel_violations(channel: tuple) -> list[str]:
    return [f"unknown message {m.type}" for m in channel if m.type not in MESSAGE_TYPES]


def _exclusivity(pool: tuple, block: tuple) -> list[str]:
    both = set(pool) & set(block)
    return [f"{tx.type} both pending and confirmed" for tx in sorted(both)]


WORKFLOWS = {
    "registration": RegistrationWorkflow,
    "policy-creation": PolicyCreationWorkflow,
    "cti-insertion": InsertionWorkflow,
    "access-authorization": AccessWorkflow,
}
