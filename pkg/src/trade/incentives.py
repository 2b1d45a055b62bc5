"""Karma accounting, ratings and reputation, and legal-contract tagging.

Balances and scores are folded from confirmed Activity-ledger transactions;
:func:`replay` recomputes them independently from the raw chains so audits
can reconcile the live state against the ledger history.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .activity import AccessPermissionToken, ActivityNetwork, DataRecord
from .config import TradeConfig
from .crypto import Signer
from .errors import (
    AlreadyRated,
    AlreadySigned,
    InsufficientKarma,
    LegalSignatureRequired,
    NoSuchContract,
    NotAConsumer,
    StarsOutOfRange,
)
from .identity import IdentityNetwork, PseudoIdentity
from .ledger import Confirmed, Ledger, Transaction, TxType
from .runtime import Runtime


@dataclass
class KarmaAccount:
    holder: str
    balance: int
    discount_credits: int = 0
    awarded: int = 0
    spent: int = 0
    initial: int = 0


@dataclass
class ReputationProfile:
    holder: str
    ratings: list[int] = field(default_factory=list)
    default: Fraction = Fraction(5, 2)

    @property
    def ratings_count(self) -> int:
        return len(self.ratings)

    @property
    def score(self) -> Fraction:
        if not self.ratings:
            return self.default
        return Fraction(sum(self.ratings), len(self.ratings))


@dataclass
class LegalContractTag:
    contract_id: str
    record_uid: str
    terms_text: str
    signatures: list[tuple[str, int]] = field(default_factory=list)

    def signed_by(self, who: str) -> bool:
        return any(s == who for s, _ in self.signatures)


def split_cost(balance: int, discount: int, cost: int) -> tuple[int, int]:
    """(balance debit, discount debit) for one consume; discounts go first."""
    from_discount = min(discount, cost)
    from_balance = cost - from_discount
    if from_balance > balance:
        raise InsufficientKarma(f"needs {from_balance} karma, has {balance}")
    return from_balance, from_discount


def contract_id_for(record_uid: str) -> str:
    return "lc-" + record_uid


class Incentives:
    def __init__(self, activity: ActivityNetwork, identity: IdentityNetwork, runtime: Runtime):
        self.activity = activity
        self.identity = identity
        self.runtime = runtime
        self.ledger: Ledger = activity.ledger
        self.accounts: dict[str, KarmaAccount] = {}
        self.reputations: dict[str, ReputationProfile] = {}
        self.contracts: dict[str, LegalContractTag] = {}
        self.rated: set[tuple[str, str]] = set()
        # Paid-but-unused consume tickets per (consumer, record).
        self.tickets: dict[tuple[str, str], int] = {}
        identity.pseudonym_listeners.append(self._open_account)
        identity.reputation_of = self.reputation
        activity.record_listeners.append(self._on_record)
        activity.token_listeners.append(self._on_token)
        activity.apr_guards.extend((self._payment_guard, self._legal_guard))
        self.ledger.on_confirm(TxType.ATX_KARMA, self._on_karma)
        self.ledger.on_confirm(TxType.ATX_RATING, self._on_rating)
        self.ledger.on_confirm(TxType.ATX_LEGAL_SIGNATURE, self._on_signature)

    @property
    def config(self) -> TradeConfig:
        return self.runtime.config

    def account(self, holder: str) -> KarmaAccount:
        if holder not in self.accounts:
            self.accounts[holder] = KarmaAccount(holder, 0)
        return self.accounts[holder]

    def profile(self, holder: str) -> ReputationProfile:
        if holder not in self.reputations:
            self.reputations[holder] = ReputationProfile(holder, default=self.config.default_reputation)
        return self.reputations[holder]

    def reputation(self, holder: str) -> Fraction:
        return self.profile(holder).score

    def _open_account(self, pseudonym: PseudoIdentity) -> None:
        grant = self.config.initial_grant
        self.accounts[pseudonym.address] = KarmaAccount(pseudonym.address, grant, initial=grant)

    # -- karma -----------------------------------------------------------------

    def award_on_publish(self, owner: str, record_uid: str) -> int:
        acct = self.account(owner)
        acct.balance += self.config.publish_reward
        acct.awarded += self.config.publish_reward
        return acct.balance

    def _on_record(self, record: DataRecord, where: Confirmed) -> None:
        self.award_on_publish(record.owner, record.record_uid)
        if record.legal_terms is not None:
            cid = contract_id_for(record.record_uid)
            self.contracts[cid] = LegalContractTag(cid, record.record_uid, record.legal_terms)

    def can_afford(self, consumer: str) -> bool:
        acct = self.account(consumer)
        try:
            split_cost(acct.balance, acct.discount_credits, self.config.consume_cost)
        except InsufficientKarma:
            return False
        return True

    def has_ticket(self, consumer: str, record_uid: str) -> bool:
        return self.tickets.get((consumer, record_uid), 0) > 0

    def spend_on_consume(self, consumer: Signer, record_uid: str) -> int:
        self.activity.record(record_uid)
        acct = self.account(consumer.submitter)
        debit, discount = split_cost(acct.balance, acct.discount_credits, self.config.consume_cost)
        self.runtime.commit(self.ledger, TxType.ATX_KARMA, consumer,
                            {"record_uid": record_uid, "balance_debit": debit,
                             "discount_debit": discount})
        return self.account(consumer.submitter).balance

    def _on_karma(self, tx: Transaction, where: Confirmed) -> None:
        f = tx.fields
        self.activity.record(f["record_uid"])
        acct = self.account(tx.submitter)
        debit, discount = split_cost(acct.balance, acct.discount_credits, self.config.consume_cost)
        if (debit, discount) != (f["balance_debit"], f["discount_debit"]):
            raise InsufficientKarma("stated debit disagrees with the account")
        acct.balance -= debit
        acct.discount_credits -= discount
        acct.spent += debit
        key = (tx.submitter, f["record_uid"])
        self.tickets[key] = self.tickets.get(key, 0) + 1

    def _payment_guard(self, requester: str, record: DataRecord) -> None:
        if not self.has_ticket(requester, record.record_uid):
            raise InsufficientKarma(f"{requester} has not paid for {record.record_uid}")

    def _on_token(self, token: AccessPermissionToken, where: Confirmed) -> None:
        self.tickets[(token.requester, token.record_uid)] -= 1

    # -- ratings ---------------------------------------------------------------

    def _check_rating(self, consumer: str, record_uid: str, stars: int) -> DataRecord:
        if isinstance(stars, bool) or not isinstance(stars, int) or not 0 <= stars <= 5:
            raise StarsOutOfRange(repr(stars))
        record = self.activity.record(record_uid)
        if not self.activity.has_retrieved(consumer, record_uid):
            raise NotAConsumer(f"{consumer} never retrieved {record_uid}")
        if (consumer, record_uid) in self.rated:
            raise AlreadyRated(f"{consumer} already rated {record_uid}")
        return record

    def rate_contribution(self, consumer: Signer, record_uid: str, stars: int) -> tuple[Fraction, int]:
        record = self._check_rating(consumer.submitter, record_uid, stars)
        self.runtime.commit(self.ledger, TxType.ATX_RATING, consumer,
                            {"record_uid": record_uid, "stars": stars, "producer": record.owner})
        return self.reputation(record.owner), self.account(consumer.submitter).discount_credits

    def _on_rating(self, tx: Transaction, where: Confirmed) -> None:
        f = tx.fields
        record = self._check_rating(tx.submitter, f["record_uid"], f["stars"])
        self.rated.add((tx.submitter, record.record_uid))
        self.profile(record.owner).ratings.append(f["stars"])
        self.account(tx.submitter).discount_credits += self.config.rating_discount

    # -- legal contracts -------------------------------------------------------

    def contract(self, contract_id: str) -> LegalContractTag:
        try:
            return self.contracts[contract_id]
        except KeyError:
            raise NoSuchContract(contract_id) from None

    def contract_for_record(self, record_uid: str) -> LegalContractTag | None:
        return self.contracts.get(contract_id_for(record_uid))

    def sign_legal_contract(self, consumer: Signer, contract_id: str) -> int:
        tag = self.contract(contract_id)
        if tag.signed_by(consumer.submitter):
            raise AlreadySigned(f"{consumer.submitter} already signed {contract_id}")
        tx = self.runtime.commit(self.ledger, TxType.ATX_LEGAL_SIGNATURE, consumer,
                                 {"contract_id": contract_id, "record_uid": tag.record_uid})
        return tx.timestamp

    def _on_signature(self, tx: Transaction, where: Confirmed) -> None:
        tag = self.contract(tx.fields["contract_id"])
        if tag.signed_by(tx.submitter):
            raise AlreadySigned(f"{tx.submitter} already signed {tag.contract_id}")
        tag.signatures.append((tx.submitter, tx.timestamp))

    def _legal_guard(self, requester: str, record: DataRecord) -> None:
        tag = self.contract_for_record(record.record_uid)
        if tag is not None and not tag.signed_by(requester):
            raise LegalSignatureRequired(f"{record.record_uid} requires signing {tag.contract_id}")

    def summary(self) -> str:
        lines = []
        for holder in sorted(self.accounts):
            acct = self.accounts[holder]
            rep = self.profile(holder)
            lines.append(f"{holder}|balance={acct.balance}|discount={acct.discount_credits}"
                         f"|awarded={acct.awarded}|spent={acct.spent}"
                         f"|reputation={rep.score}|ratings={rep.ratings_count}")
        return "".join(line + "\n" for line in lines)


@dataclass
class ReplayResult:
    balances: dict[str, int]
    discounts: dict[str, int]
    awarded: int
    spent: int
    initial: int
    ratings: dict[str, list[int]]

    def reputation(self, holder: str, default: Fraction) -> Fraction:
        seq = self.ratings.get(holder, [])
        return Fraction(sum(seq), len(seq)) if seq else default


def replay(identity_ledger: Ledger, activity_ledger: Ledger, config: TradeConfig) -> ReplayResult:
    """Recompute karma and ratings from the two chains alone."""
    balances: dict[str, int] = {}
    discounts: dict[str, int] = {}
    ratings: dict[str, list[int]] = {}
    awarded = spent = initial = 0
    for item in identity_ledger.confirmed():
        if item.tx.tx_type is TxType.TX_BLOCKCHAIN:
            balances[item.tx.fields["address"]] = config.initial_grant
            initial += config.initial_grant
    for item in activity_ledger.confirmed():
        tx, f = item.tx, item.tx.fields
        if tx.tx_type is TxType.ATX_CYBER_THREAT and f["action"] == "publish":
            balances[tx.submitter] = balances.get(tx.submitter, 0) + config.publish_reward
            awarded += config.publish_reward
        elif tx.tx_type is TxType.ATX_KARMA:
            balances[tx.submitter] = balances.get(tx.submitter, 0) - f["balance_debit"]
            discounts[tx.submitter] = discounts.get(tx.submitter, 0) - f["discount_debit"]
            spent += f["balance_debit"]
        elif tx.tx_type is TxType.ATX_RATING:
            discounts[tx.submitter] = discounts.get(tx.submitter, 0) + config.rating_discount
            ratings.setdefault(f["producer"], []).append(f["stars"])
    return ReplayResult(balances, discounts, awarded, spent, initial, ratings)
