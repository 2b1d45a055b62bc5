"""Small builders shared by the test modules."""

from __future__ import annotations

from pathlib import Path

from trade import OrganizationProfile, TradeConfig, TradeNetwork
from trade.activity import Privilege

SCENARIOS = Path(__file__).resolve().parent.parent / "src" / "trade" / "scenarios"
PAYLOAD = b"indicator,type\n198.51.100.23,ipv4\n"

ACME = OrganizationProfile("Acme Corp", 250, 5_000_000, "EU")
BETA = OrganizationProfile("Beta Energy", 120, 2_000_000, "EU", {"gdpr": True})
TINY = OrganizationProfile("Tiny Shop", 8, 90_000, "US", {"gdpr": False})


def world(registrars: int = 1, config: TradeConfig | None = None, **overrides) -> TradeNetwork:
    config = config or TradeConfig()
    for key, value in overrides.items():
        config = config.with_key(key.replace("__", "."), str(value))
    net = TradeNetwork(config)
    for i in range(registrars):
        net.add_registrar(f"R{i + 1}")
    net.add_server("S1")
    return net


def join(net: TradeNetwork, profile: OrganizationProfile, registrar: str = "R1", tags=()):
    session = net.session(profile.name)
    session.register(registrar, profile, tags)
    return session


def publish(owner, policy_ids=(), keywords=("malware",), payload: bytes = PAYLOAD, **kw) -> str:
    return owner.insert_cti(payload, keywords, {Privilege.READ: tuple(policy_ids)}, "S1", **kw)
