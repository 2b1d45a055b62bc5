"""In-process wiring of both ledgers, their contracts, servers and sessions."""

from __future__ import annotations

from typing import Callable

from .activity import ActivityNetwork
from .config import TradeConfig
from .crypto import KeyFactory
from .encoding import decode, encode
from .identity import IdentityNetwork, OrganizationProfile, Registrar, default_verify_profile
from .incentives import Incentives
from .ledger import Ledger, Network
from .runtime import Runtime, SimClock
from .server import M_ACCESS, M_NO, CtiServer


class Transport:
    """Routes canonical-encoded messages to servers by address."""

    def __init__(self):
        self.servers: dict[str, CtiServer] = {}
        self.log: list[tuple[str, str]] = []

    def attach(self, server: CtiServer) -> None:
        self.servers[server.address] = server

    def request(self, address: str, message: bytes) -> bytes:
        server = self.servers.get(address)
        kind = decode(message).get("type", "?")
        self.log.append((address, kind))
        if server is None:
            code = "UnknownRecord" if kind == M_ACCESS else "InsertionFailed"
            return encode({"type": M_NO, "code": code, "message": f"no server at {address}"})
        return server.handle(message)


class TradeNetwork:
    def __init__(self, config: TradeConfig | None = None, seed: bytes = b"trade",
                 verify_profile: Callable[[OrganizationProfile], bool] = default_verify_profile,
                 auto_confirm: bool = True):
        self.runtime = Runtime(config or TradeConfig(), SimClock(), KeyFactory(seed), auto_confirm)
        self.identity_ledger = Ledger(Network.IDENTITY)
        self.activity_ledger = Ledger(Network.ACTIVITY)
        self.identity = IdentityNetwork(self.identity_ledger, self.runtime, verify_profile)
        self.activity = ActivityNetwork(self.activity_ledger, self.runtime, self.identity)
        self.incentives = Incentives(self.activity, self.identity, self.runtime)
        self.transport = Transport()

    @property
    def clock(self) -> SimClock:
        return self.runtime.clock

    @property
    def config(self) -> TradeConfig:
        return self.runtime.config

    def add_registrar(self, registrar_id: str) -> Registrar:
        return self.identity.add_registrar(registrar_id)

    def add_server(self, address: str) -> CtiServer:
        server = CtiServer(address, self.activity, self.runtime)
        self.transport.attach(server)
        return server

    def server(self, address: str) -> CtiServer:
        return self.transport.servers[address]

    def session(self, real_name: str):
        from .client import ClientSession
        return ClientSession(self, real_name)

    def confirm(self) -> int:
        return self.identity_ledger.confirm_receipt() + self.activity_ledger.confirm_receipt()

    def tick(self, ticks: int = 1) -> int:
        confirmed = self.confirm()
        self.clock.advance(ticks)
        return confirmed
