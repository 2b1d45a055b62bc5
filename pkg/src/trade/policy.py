"""Attribute-based policy language: parser, canonical printer, evaluator and
vacuity check.

Grammar (whitespace-insensitive)::

    policy  := expr | expr (('AND' | 'OR') expr)+
    expr    := '(' leaf ')' | '(' expr (('AND' | 'OR') expr)+ ')'
    leaf    := name op literal
    op      := '=' | '!=' | '<' | '<=' | '>' | '>=' | 'contains'
    literal := integer | decimal | 'true' | 'false' | '"' chars '"'

One group may not mix AND and OR; nest a group instead.  The outermost
combination may omit its parentheses, which is also how the canonical
printer writes it.
"""

from __future__ import annotations

import itertools
import math
import re
import warnings
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .errors import (
    DomainTooLarge,
    EmptyCombine,
    MissingAttribute,
    PolicySyntaxError,
    TypeMismatch,
    UnknownDomain,
    UnknownOperator,
    VacuousPolicyWarning,
)

Value = Union[bool, int, Fraction, str]


class Op(Enum):
    EQ = "="
    NE = "!="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    CONTAINS = "contains"


class Connective(Enum):
    AND = "AND"
    OR = "OR"


class PolicyKind(Enum):
    BADGE = "Badge"
    SHARING = "Sharing"
    CONSUMPTION = "Consumption"


@dataclass(frozen=True)
class Leaf:
    attribute: str
    op: Op
    value: Value


@dataclass(frozen=True)
class Combine:
    connective: Connective
    children: tuple["RuleNode", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Combine requires at least two children")


RuleNode = Union[Leaf, Combine]


@dataclass(frozen=True)
class PolicyDocument:
    policy_id: str
    owner: str
    description: str
    terms: RuleNode
    kind: PolicyKind
    # None means any member may reference the policy.
    grantees: frozenset[str] | None = None

    @property
    def source(self) -> str:
        return print_policy(self.terms)

    def may_reference(self, who: str) -> bool:
        return self.grantees is None or who == self.owner or who in self.grantees


# -- lexer ------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<symbol>[=!<>~]+)
""", re.VERBOSE)

_SYMBOL_OPS = {op.value: op for op in Op if op is not Op.CONTAINS}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _lex(text: str) -> list[_Tok]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos] == '"':
                raise PolicySyntaxError("unterminated string literal", pos)
            raise PolicySyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Tok("end", "", len(text)))
    return tokens


# -- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = _lex(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.tokens[self.i]

    def advance(self) -> _Tok:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def is_connective(self, tok: _Tok) -> bool:
        return tok.kind == "word" and tok.text in ("AND", "OR")

    def parse_policy(self) -> RuleNode:
        if self.is_connective(self.tok):
            raise EmptyCombine(f"{self.tok.text} without a left operand", self.tok.pos)
        if self.tok.kind == "end":
            raise EmptyCombine("empty policy", self.tok.pos)
        node = self.parse_sequence(top=True)
        if self.tok.kind != "end":
            raise PolicySyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def parse_sequence(self, top: bool) -> RuleNode:
        """Parse ``expr ((AND|OR) expr)*``; a lone expr is returned as-is."""
        children = [self.parse_expr()]
        connective: Connective | None = None
        while self.is_connective(self.tok):
            tok = self.advance()
            this = Connective(tok.text)
            if connective is not None and this is not connective:
                raise PolicySyntaxError("cannot mix AND and OR in one group", tok.pos)
            connective = this
            if self.tok.kind != "lparen":
                if self.tok.kind in ("rparen", "end") or self.is_connective(self.tok):
                    raise EmptyCombine(f"{tok.text} without a right operand", self.tok.pos)
                raise PolicySyntaxError(f"expected '(' after {tok.text}", self.tok.pos)
            children.append(self.parse_expr())
        if connective is None:
            return children[0]
        return Combine(connective, tuple(children))

    def parse_expr(self) -> RuleNode:
        open_tok = self.tok
        if open_tok.kind != "lparen":
            raise PolicySyntaxError("expected '('", open_tok.pos)
        self.advance()
        nxt = self.tok
        if nxt.kind == "rparen":
            raise EmptyCombine("empty group", nxt.pos)
        if self.is_connective(nxt):
            raise EmptyCombine(f"{nxt.text} without a left operand", nxt.pos)
        if nxt.kind == "word":
            node = self.parse_leaf()
        elif nxt.kind == "lparen":
            node = self.parse_sequence(top=False)
            if not isinstance(node, Combine):
                raise EmptyCombine("group needs at least two operands", open_tok.pos)
        else:
            raise PolicySyntaxError(f"unexpected {nxt.text!r}", nxt.pos)
        if self.tok.kind != "rparen":
            raise PolicySyntaxError(f"expected ')' but found {self.tok.text or 'end'!r}",
                                    self.tok.pos)
        self.advance()
        return node

    def parse_leaf(self) -> Leaf:
        name = self.advance()
        if name.text in ("AND", "OR", "true", "false", "contains"):
            raise PolicySyntaxError(f"reserved word {name.text!r} used as attribute", name.pos)
        op_tok = self.advance()
        if op_tok.kind == "symbol":
            op = _SYMBOL_OPS.get(op_tok.text)
            if op is None:
                raise UnknownOperator(f"unknown operator {op_tok.text!r}", op_tok.pos)
        elif op_tok.kind == "word":
            if op_tok.text != "contains":
                raise UnknownOperator(f"unknown operator {op_tok.text!r}", op_tok.pos)
            op = Op.CONTAINS
        else:
            raise PolicySyntaxError("expected an operator", op_tok.pos)
        return Leaf(name.text, op, self.parse_literal())

    def parse_literal(self) -> Value:
        tok = self.advance()
        if tok.kind == "number":
            return Fraction(tok.text) if "." in tok.text else int(tok.text)
        if tok.kind == "string":
            return _unescape(tok.text[1:-1], tok.pos)
        if tok.kind == "word" and tok.text in ("true", "false"):
            return tok.text == "true"
        raise PolicySyntaxError("expected a literal", tok.pos)


def _unescape(body: str, pos: int) -> str:
    out = []
    it = iter(enumerate(body))
    for i, ch in it:
        if ch == "\\":
            _, nxt = next(it)
            if nxt not in ('"', "\\"):
                raise PolicySyntaxError(f"bad escape \\{nxt}", pos + 1 + i)
            out.append(nxt)
        else:
            out.append(ch)
    return "".join(out)


def parse_policy(text: str) -> RuleNode:
    return _Parser(text).parse_policy()


# -- printer ----------------------------------------------------------------

def _literal(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        return _decimal(value)
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _decimal(value: Fraction) -> str:
    if value.denominator == 1:
        return f"{value.numerator}.0"
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        raise ValueError(f"{value} has no finite decimal form")
    places = max(twos, fives)
    scaled = abs(value.numerator) * 10 ** places // value.denominator
    sign = "-" if value < 0 else ""
    digits = str(scaled).rjust(places + 1, "0")
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def print_policy(node: RuleNode, top: bool = True) -> str:
    if isinstance(node, Leaf):
        return f"({node.attribute} {node.op.value} {_literal(node.value)})"
    inner = f" {node.connective.value} ".join(print_policy(c, top=False) for c in node.children)
    return inner if top else f"({inner})"


# -- evaluation -------------------------------------------------------------

def leaves(node: RuleNode) -> Iterable[Leaf]:
    if isinstance(node, Leaf):
        yield node
    else:
        for child in node.children:
            yield from leaves(child)


def attributes_of(node: RuleNode) -> list[str]:
    seen: dict[str, None] = {}
    for leaf in leaves(node):
        seen.setdefault(leaf.attribute)
    return list(seen)


def _is_number(v: object) -> bool:
    return isinstance(v, (int, Fraction)) and not isinstance(v, bool)


def _kind(v: object) -> str:
    if isinstance(v, bool):
        return "bool"
    if _is_number(v):
        return "number"
    if isinstance(v, str):
        return "str"
    return type(v).__name__


def _compare(leaf: Leaf, actual: Value) -> bool:
    expected = leaf.value
    op = leaf.op
    if op is Op.CONTAINS:
        if not (isinstance(actual, str) and isinstance(expected, str)):
            raise TypeMismatch(leaf.attribute, "contains needs strings")
        return expected in actual
    if op in (Op.EQ, Op.NE):
        if _kind(actual) != _kind(expected):
            raise TypeMismatch(leaf.attribute, f"{_kind(actual)} vs {_kind(expected)}")
        return (actual == expected) is (op is Op.EQ)
    if not (_is_number(actual) and _is_number(expected)):
        raise TypeMismatch(leaf.attribute, f"{op.value} needs numbers")
    if op is Op.LT:
        return actual < expected
    if op is Op.LE:
        return actual <= expected
    if op is Op.GT:
        return actual > expected
    return actual >= expected


def _eval(node: RuleNode, attrs: Mapping[str, Value]) -> bool:
    if isinstance(node, Leaf):
        return _compare(node, attrs[node.attribute])
    # No short-circuit, so type errors surface regardless of child order.
    results = [_eval(child, attrs) for child in node.children]
    return all(results) if node.connective is Connective.AND else any(results)


def evaluate(terms: RuleNode, attrs: Mapping[str, Value]) -> bool:
    for name in attributes_of(terms):
        if name not in attrs:
            raise MissingAttribute(name)
    return _eval(terms, attrs)


# -- vacuity ----------------------------------------------------------------

Domain = Union[range, Sequence[Value]]


def _range_member_below(r: range, x) -> int | None:
    if not r or x <= r[0]:
        return None
    if x > r[-1]:
        return r[-1]
    k = math.ceil(Fraction(x - r.start) / r.step) - 1
    return r[k]


def _range_member_above(r: range, x) -> int | None:
    if not r or x >= r[-1]:
        return None
    if x < r[0]:
        return r[0]
    k = math.floor(Fraction(x - r.start) / r.step) + 1
    return r[k]


def representatives(domain: Domain, literals: Iterable[Value]) -> list:
    """Domain members that realise every distinct truth pattern of the leaves.

    A leaf's truth value over an integer range only changes at its literal,
    so the range endpoints plus each literal and its two neighbours are
    enough.  Explicit sequences are returned whole.
    """
    if not isinstance(domain, range):
        return list(domain)
    if not domain:
        return []
    picks = {domain[0], domain[-1]}
    for lit in literals:
        if not _is_number(lit):
            continue
        for cand in (_range_member_below(domain, lit), _range_member_above(domain, lit)):
            if cand is not None:
                picks.add(cand)
        if lit == int(lit) and int(lit) in domain:
            picks.add(int(lit))
    return sorted(picks)


def is_vacuous(terms: RuleNode, domains: Mapping[str, Domain], limit: int = 10 ** 6) -> bool:
    """True iff ``terms`` holds for every assignment over the declared domains."""
    names = attributes_of(terms)
    literals: dict[str, list[Value]] = {n: [] for n in names}
    for leaf in leaves(terms):
        literals[leaf.attribute].append(leaf.value)
    axes = []
    for name in names:
        if name not in domains:
            raise UnknownDomain(name)
        axes.append(representatives(domains[name], literals[name]))
    size = math.prod(len(a) for a in axes)
    if size > limit:
        raise DomainTooLarge(f"{size} combinations exceed the limit of {limit}")
    for combo in itertools.product(*axes):
        if not _eval(terms, dict(zip(names, combo))):
            return False
    return True


def warn_if_vacuous(terms: RuleNode, domains: Mapping[str, Domain], limit: int = 10 ** 6) -> bool:
    """Advisory check used at deployment; undeclared attributes skip the check."""
    try:
        vacuous = is_vacuous(terms, domains, limit)
    except (UnknownDomain, DomainTooLarge, TypeMismatch):
        return False
    if vacuous:
        warnings.warn(f"policy {print_policy(terms)} is satisfied by every profile",
                      VacuousPolicyWarning, stacklevel=3)
    return vacuous
