"""Independent reference implementations used to cross-check the package.

Nothing here imports the package's evaluator: rule trees are generated as
plain tuples, rendered to policy text, and evaluated by direct Python
comparison over exhaustively enumerated assignments.
"""

from __future__ import annotations

import itertools
import operator
import random
from fractions import Fraction

OPS = {"=": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
       ">": operator.gt, ">=": operator.ge, "contains": lambda actual, lit: lit in actual}
NEGATION = {"=": "!=", "!=": "=", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}

# Five attributes, one per value shape the language supports.
EVAL_DOMAINS = {
    "employees": list(range(0, 6)),
    "revenue": list(range(0, 4)),
    "region": ["EU", "US", "APAC"],
    "gdpr": [False, True],
    "sector": ["finance", "energy", "health"],
}
VACUITY_DOMAINS = {
    "employees": range(0, 60, 3),
    "revenue": range(-5, 5),
    "region": ["EU", "US", "APAC"],
    "gdpr": [False, True],
    "sector": ["finance", "energy", "health"],
}
INT_ATTRS = ("employees", "revenue")


def random_literal(rng: random.Random, attr: str, domains):
    if attr in INT_ATTRS:
        values = list(domains[attr])
        lo, hi = min(values) - 2, max(values) + 2
        if rng.random() < 0.2:
            return Fraction(rng.randint(2 * lo, 2 * hi), 2)
        return rng.randint(lo, hi)
    if attr == "gdpr":
        return rng.choice([True, False])
    if attr == "sector":
        return rng.choice(["finance", "energy", "health", "fin", "ergy", "x"])
    return rng.choice(["EU", "US", "APAC", "LATAM"])


def random_leaf(rng: random.Random, domains, attrs=None):
    attr = rng.choice(attrs or sorted(domains))
    if attr in INT_ATTRS:
        op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
    elif attr == "gdpr":
        op = rng.choice(["=", "!="])
    elif attr == "sector":
        op = rng.choice(["=", "!=", "contains"])
    else:
        op = rng.choice(["=", "!="])
    return ("leaf", attr, op, random_literal(rng, attr, domains))


def random_tree(rng: random.Random, depth: int = 4, domains=EVAL_DOMAINS):
    """A rule tree of depth at most ``depth`` (a bare leaf has depth 1)."""
    if depth <= 1 or rng.random() < 0.3:
        return random_leaf(rng, domains)
    kind = rng.choice(["and", "or"])
    return (kind, [random_tree(rng, depth - 1, domains) for _ in range(rng.randint(2, 3))])


def negate_leaf(leaf):
    _, attr, op, value = leaf
    if op == "contains":
        return None
    return ("leaf", attr, NEGATION[op], value)


def tautology_candidate(rng: random.Random, domains=VACUITY_DOMAINS):
    """``X OR not-X`` padded with noise; vacuous by construction."""
    leaf = random_leaf(rng, domains)
    while negate_leaf(leaf) is None:
        leaf = random_leaf(rng, domains)
    parts = [leaf, negate_leaf(leaf)]
    if rng.random() < 0.5:
        parts.append(random_tree(rng, 2, domains))
    rng.shuffle(parts)
    return ("or", parts)


def tree_depth(tree) -> int:
    if tree[0] == "leaf":
        return 1
    return 1 + max(tree_depth(c) for c in tree[1])


def render_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        whole, rest = divmod(abs(value.numerator) * 10, value.denominator)
        sign = "-" if value < 0 else ""
        return f"{sign}{whole // 10}.{whole % 10}" if rest == 0 else str(float(value))
    if isinstance(value, int):
        return str(value)
    return '"' + value + '"'


def render(tree) -> str:
    if tree[0] == "leaf":
        _, attr, op, value = tree
        return f"({attr} {op} {render_literal(value)})"
    joiner = " AND " if tree[0] == "and" else " OR "
    return "(" + joiner.join(render(c) for c in tree[1]) + ")"


def oracle_eval(tree, assignment: dict) -> bool:
    if tree[0] == "leaf":
        _, attr, op, value = tree
        return bool(OPS[op](assignment[attr], value))
    results = [oracle_eval(c, assignment) for c in tree[1]]
    return all(results) if tree[0] == "and" else any(results)


def tree_attrs(tree) -> list[str]:
    if tree[0] == "leaf":
        return [tree[1]]
    seen: list[str] = []
    for child in tree[1]:
        for attr in tree_attrs(child):
            if attr not in seen:
                seen.append(attr)
    return seen


def truth_table(tree, domains):
    """Every assignment of the referenced attributes, paired with the oracle verdict."""
    names = sorted(tree_attrs(tree))
    for combo in itertools.product(*(list(domains[n]) for n in names)):
        assignment = dict(zip(names, combo))
        yield assignment, oracle_eval(tree, assignment)


def oracle_vacuous(tree, domains) -> bool:
    return all(verdict for _, verdict in truth_table(tree, domains))


def ceil_two_thirds(n: int) -> int:
    """Smallest k with 3k >= 2n, found by counting up."""
    k = 0
    while 3 * k < 2 * n:
        k += 1
    return k
