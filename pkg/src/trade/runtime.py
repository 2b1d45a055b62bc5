"""Shared simulation context: logical clock, key factory and the commit helper."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import TradeConfig
from .crypto import KeyFactory, Signer
from .ledger import Ledger, Transaction, TxType


@dataclass
class SimClock:
    """Monotonic logical time; only ``advance`` moves it."""

    now: int = 0

    def advance(self, ticks: int = 1) -> int:
        if ticks < 0:
            raise ValueError("clock cannot move backwards")
        self.now += ticks
        return self.now


@dataclass
class Runtime:
    config: TradeConfig = field(default_factory=TradeConfig)
    clock: SimClock = field(default_factory=SimClock)
    keys: KeyFactory = field(default_factory=KeyFactory)
    # With auto_confirm every contract call is submitted and confirmed at
    # once, so callers see its effect (or its error) synchronously.
    auto_confirm: bool = True

    def commit(self, ledger: Ledger, tx_type: TxType, signer: Signer, fields: dict) -> Transaction:
        body = dict(fields)
        body["nonce"] = ledger.next_nonce(signer.submitter)
        tx = Transaction.create(tx_type, signer, body, self.clock.now)
        ledger.submit(tx)
        if self.auto_confirm:
            ledger.confirm_receipt()
            receipt = ledger.receipt(tx.tx_id)
            if receipt is not None and receipt.error is not None:
                raise receipt.error
        return tx
