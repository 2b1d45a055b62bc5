"""Exception hierarchy shared by every TRADE component.

Each concrete error carries a stable ``code`` (the class name by default),
which is what scenario scripts match against with ``expect err:<code>`` and
what the CTI server puts into its ``M_NO`` responses.
"""

from __future__ import annotations


class TradeError(Exception):
    """Base class for all protocol-level failures."""

    code: str = ""

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if "code" not in cls.__dict__:
            cls.code = cls.__name__


TradeError.code = "TradeError"


# -- ledger -----------------------------------------------------------------

class UnknownSubmitter(TradeError):
    pass


class ForbiddenTransactionType(TradeError):
    pass


class BadSignature(TradeError):
    pass


class DuplicateTxId(TradeError):
    pass


class MalformedDump(TradeError):
    pass


# -- policy engine ----------------------------------------------------------

class PolicySyntaxError(TradeError):
    code = "SyntaxError"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownOperator(PolicySyntaxError):
    code = "UnknownOperator"


class EmptyCombine(PolicySyntaxError):
    code = "EmptyCombine"


class MissingAttribute(TradeError):
    def __init__(self, name: str):
        super().__init__(f"attribute {name!r} not present")
        self.name = name


class TypeMismatch(TradeError):
    def __init__(self, attribute: str, detail: str = ""):
        super().__init__(f"type mismatch on {attribute!r}{': ' + detail if detail else ''}")
        self.attribute = attribute


class DomainTooLarge(TradeError):
    pass


class UnknownDomain(TradeError):
    pass


class VacuousPolicyWarning(UserWarning):
    """Raised through :mod:`warnings` when a deployed policy accepts everyone."""


# -- identity network -------------------------------------------------------

class VerificationFailed(TradeError):
    pass


class UnknownRegistrar(TradeError):
    pass


class UnknownOrganization(TradeError):
    pass


class UnknownIdentity(TradeError):
    pass


class RevokedIdentity(TradeError):
    pass


class NotOwner(TradeError):
    pass


class UnknownPolicy(TradeError):
    pass


class NotGranted(TradeError):
    pass


class PolicyNotSatisfied(TradeError):
    pass


class DuplicateVote(TradeError):
    pass


# -- activity network -------------------------------------------------------

class MalformedRecord(TradeError):
    pass


class UnknownRecord(TradeError):
    pass


class UnknownPrivilege(TradeError):
    pass


class InvalidBadge(TradeError):
    pass


class PolicyCoverageIncomplete(TradeError):
    pass


class UnknownAPT(TradeError):
    pass


# -- CTI server -------------------------------------------------------------

class InsertionFailed(TradeError):
    pass


class StaleTimestamp(TradeError):
    pass


class AuthenticationFailed(TradeError):
    pass


class PrivilegeMismatch(TradeError):
    pass


class ExpiredToken(TradeError):
    pass


# -- client SDK -------------------------------------------------------------

class ConsumptionPolicyRejected(TradeError):
    pass


class DataAuthenticationFailed(TradeError):
    pass


class NoActivePseudonym(TradeError):
    pass


# -- incentives -------------------------------------------------------------

class InsufficientKarma(TradeError):
    pass


class NotAConsumer(TradeError):
    pass


class AlreadyRated(TradeError):
    pass


class StarsOutOfRange(TradeError):
    pass


class AlreadySigned(TradeError):
    pass


class NoSuchContract(TradeError):
    pass


class LegalSignatureRequired(TradeError):
    pass


# -- explorer / cli ---------------------------------------------------------

class StateSpaceBudgetExceeded(TradeError):
    pass


class ScriptParseError(TradeError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ScriptReferenceError(TradeError):
    code = "ReferenceError"

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


_BY_CODE: dict[str, type[TradeError]] = {}


def _index(cls: type[TradeError]) -> None:
    for sub in cls.__subclasses__():
        _BY_CODE.setdefault(sub.code, sub)
        _index(sub)


def error_for_code(code: str, message: str = "") -> TradeError:
    """Rebuild an exception from its wire code (used for M_NO responses)."""
    if not _BY_CODE:
        _index(TradeError)
    cls = _BY_CODE.get(code)
    if cls is None:
        err = TradeError(message or code)
        err.code = code
        return err
    err = cls.__new__(cls)
    Exception.__init__(err, message or code)
    return err
