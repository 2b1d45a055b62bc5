import random
import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import EVAL_DOMAINS, VACUITY_DOMAINS, oracle_vacuous, random_tree, render
from trade.errors import (
    DomainTooLarge,
    EmptyCombine,
    MissingAttribute,
    PolicySyntaxError,
    TypeMismatch,
    UnknownDomain,
    UnknownOperator,
    VacuousPolicyWarning,
)
from trade.policy import (
    Combine,
    Connective,
    Leaf,
    Op,
    attributes_of,
    evaluate,
    is_vacuous,
    parse_policy,
    print_policy,
    representatives,
    warn_if_vacuous,
)

SME = "(employees >= 10) AND (employees < 250)"


def test_parse_flat_conjunction():
    node = parse_policy(SME)
    assert node == Combine(Connective.AND, (Leaf("employees", Op.GE, 10),
                                             Leaf("employees", Op.LT, 250)))


def test_parse_nested_groups_and_literals():
    node = parse_policy('(region = "EU") AND ((gdpr = true) OR (revenue > 1.5))')
    assert node.children[0] == Leaf("region", Op.EQ, "EU")
    inner = node.children[1]
    assert inner.connective is Connective.OR
    assert inner.children[1].value == Fraction(3, 2)
    assert inner.children[0].value is True


def test_single_parenthesised_leaf_and_contains():
    assert parse_policy('(sector contains "ener")') == Leaf("sector", Op.CONTAINS, "ener")
    with pytest.raises(EmptyCombine):
        parse_policy("((employees = 1))")


def test_string_escapes_round_trip():
    node = parse_policy(r'(name = "a \"quoted\" \\ b")')
    assert node.value == 'a "quoted" \\ b'
    assert parse_policy(print_policy(node)) == node


@pytest.mark.parametrize("text, error", [
    ("employees >= 100", PolicySyntaxError),
    ("(employees >= 1) AND (employees < 5) OR (x = 1)", PolicySyntaxError),
    ("(employees ~ 3)", UnknownOperator),
    ("()", EmptyCombine),
    ("(employees >= )", PolicySyntaxError),
    ("(employees >= 1", PolicySyntaxError),
    ("(employees >= 1))", PolicySyntaxError),
    ("", PolicySyntaxError),
    ('(name = "open)', PolicySyntaxError),
])
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse_policy(text)


def test_unknown_operator_is_a_syntax_error():
    assert issubclass(UnknownOperator, PolicySyntaxError)


def test_printer_is_canonical():
    assert print_policy(parse_policy("  (employees>=10)AND(employees<250) ")) == SME
    assert print_policy(parse_policy("(x = 2.50)")) == "(x = 2.5)"
    assert print_policy(parse_policy("(x = -0.25)")) == "(x = -0.25)"


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_print_parse_round_trip(seed):
    tree = parse_policy(render(random_tree(random.Random(seed), 4)))
    text = print_policy(tree)
    assert parse_policy(text) == tree
    assert print_policy(parse_policy(text)) == text


def test_evaluate_basic_and_or():
    node = parse_policy('(employees >= 10) AND ((region = "EU") OR (gdpr = true))')
    assert evaluate(node, {"employees": 10, "region": "US", "gdpr": True})
    assert not evaluate(node, {"employees": 9, "region": "EU", "gdpr": True})
    assert not evaluate(node, {"employees": 50, "region": "US", "gdpr": False})


def test_missing_attribute_is_reported():
    with pytest.raises(MissingAttribute):
        evaluate(parse_policy("(employees >= 10)"), {"revenue": 3})


@pytest.mark.parametrize("text, attrs", [
    ('(employees >= "ten")', {"employees": 10}),
    ("(employees = 10)", {"employees": "10"}),
    ("(gdpr = 1)", {"gdpr": True}),
    ("(employees < 3)", {"employees": True}),
    ('(sector contains "x")', {"sector": 4}),
])
def test_type_mismatches(text, attrs):
    with pytest.raises(TypeMismatch):
        evaluate(parse_policy(text), attrs)


def test_type_errors_surface_regardless_of_position():
    node = parse_policy('(employees >= 1) OR (region < 3)')
    with pytest.raises(TypeMismatch):
        evaluate(node, {"employees": 5, "region": "EU"})


def test_mixed_int_and_decimal_compare_numerically():
    assert evaluate(parse_policy("(revenue >= 1.5)"), {"revenue": 2})
    assert evaluate(parse_policy("(revenue = 2)"), {"revenue": Fraction(2)})


def test_attributes_in_first_use_order():
    node = parse_policy("(b = 1) AND ((a = 2) OR (b = 3))")
    assert attributes_of(node) == ["b", "a"]


def test_representatives_cover_each_literal_boundary():
    assert representatives(range(0, 60, 3), [10]) == [0, 9, 12, 57]
    assert representatives(range(0, 10), [Fraction(5, 2)]) == [0, 2, 3, 9]
    assert representatives(range(0, 10), [-3, 40]) == [0, 9]
    assert representatives(["a", "b"], ["c"]) == ["a", "b"]


def test_vacuity_known_cases():
    assert is_vacuous(parse_policy("(employees >= 0)"), {"employees": range(0, 100)})
    assert not is_vacuous(parse_policy("(employees >= 1)"), {"employees": range(0, 100)})
    assert is_vacuous(parse_policy("(gdpr = true) OR (gdpr = false)"), {"gdpr": [True, False]})
    assert is_vacuous(parse_policy("(employees > 1.5) OR (employees < 2)"),
                      {"employees": range(-10, 10)})


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_vacuity_agrees_with_brute_force(seed):
    tree = random_tree(random.Random(seed), 3, VACUITY_DOMAINS)
    assert is_vacuous(parse_policy(render(tree)), VACUITY_DOMAINS) == oracle_vacuous(
        tree, VACUITY_DOMAINS)


def test_vacuity_errors():
    with pytest.raises(UnknownDomain):
        is_vacuous(parse_policy("(size = 1)"), EVAL_DOMAINS)
    big = {"a": list(range(100)), "b": list(range(100))}
    with pytest.raises(DomainTooLarge):
        is_vacuous(parse_policy("(a = 1) AND (b = 1)"), big, limit=1000)


def test_warn_if_vacuous():
    with pytest.warns(VacuousPolicyWarning):
        assert warn_if_vacuous(parse_policy("(employees >= 0)"), {"employees": range(0, 5)})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not warn_if_vacuous(parse_policy("(employees >= 3)"), {"employees": range(0, 5)})
        assert not warn_if_vacuous(parse_policy("(size = 1)"), {})
