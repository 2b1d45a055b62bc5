"""Tunable constants with an INI-style loader.

Keys are dotted (``karma.publish_reward``); in the file they live under a
section named by the prefix::

    [karma]
    publish_reward = 10
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

_KEYS = {
    "karma.publish_reward": "publish_reward",
    "karma.consume_cost": "consume_cost",
    "karma.rating_discount": "rating_discount",
    "karma.initial_grant": "initial_grant",
    "reputation.default": "default_reputation",
    "apt.ttl": "apt_ttl",
    "server.max_payload": "max_payload",
    "server.min_payload": "min_payload",
    "server.stale_window": "stale_window",
    "policy.domain_limit": "domain_limit",
    "test.leak_real_names": "leak_real_names",
}


@dataclass(frozen=True)
class TradeConfig:
    publish_reward: int = 10
    consume_cost: int = 5
    rating_discount: int = 1
    initial_grant: int = 10
    default_reputation: Fraction = Fraction(5, 2)
    apt_ttl: int = 100
    max_payload: int = 1 << 20
    min_payload: int = 1
    stale_window: int = 5
    domain_limit: int = 10 ** 6
    # Test-only: embeds real organization names into ledger payloads so the
    # anonymity audit has something to catch.
    leak_real_names: bool = False

    def with_key(self, key: str, raw: str) -> "TradeConfig":
        try:
            attr = _KEYS[key]
        except KeyError:
            raise KeyError(f"unknown config key {key!r}") from None
        current = getattr(self, attr)
        if isinstance(current, bool):
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(current, Fraction):
            value = Fraction(raw.strip())
        else:
            value = int(raw.strip())
            if value < 0:
                raise ValueError(f"{key} must be non-negative")
        return replace(self, **{attr: value})

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(_KEYS)

    @classmethod
    def load(cls, path: str | Path) -> "TradeConfig":
        parser = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        config = cls()
        for section in parser.sections():
            for name, raw in parser.items(section):
                config = config.with_key(f"{section}.{name}", raw)
        return config


assert {f.name for f in fields(TradeConfig)} == set(_KEYS.values())
