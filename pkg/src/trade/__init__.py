"""Dual-ledger access control for anonymous, accountable threat-intelligence sharing."""

from .activity import DataRecord, Privilege
from .config import TradeConfig
from .identity import OrganizationProfile, VoteAction
from .network import TradeNetwork
from .policy import PolicyKind, evaluate, is_vacuous, parse_policy, print_policy

__all__ = [
    "DataRecord",
    "OrganizationProfile",
    "PolicyKind",
    "Privilege",
    "TradeConfig",
    "TradeNetwork",
    "VoteAction",
    "evaluate",
    "is_vacuous",
    "parse_policy",
    "print_policy",
]

__version__ = "0.1.0"
