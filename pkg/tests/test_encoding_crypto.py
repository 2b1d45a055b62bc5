from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trade.crypto import DEFAULT_SCHEME, KeyFactory, Signer, address_of
from trade.encoding import DIGEST_SIZE, decode, digest, digest_bytes, encode

scalars = (st.none() | st.booleans() | st.integers() | st.text() | st.binary()
           | st.fractions().filter(lambda f: f.denominator != 1))
values = st.recursive(scalars, lambda inner: st.lists(inner, max_size=4)
                      | st.dictionaries(st.text(max_size=5), inner, max_size=4), max_leaves=12)


@given(values)
def test_encode_round_trips(value):
    assert decode(encode(value)) == value


@given(st.dictionaries(st.text(max_size=4), st.integers(), max_size=6))
def test_mapping_encoding_ignores_insertion_order(mapping):
    reordered = dict(reversed(list(mapping.items())))
    assert encode(mapping) == encode(reordered)


def test_sets_encode_like_sorted_lists():
    assert encode({3, 1, 2}) == encode(frozenset({2, 3, 1}))
    assert decode(encode({"b", "a"})) == ["a", "b"]


def test_bool_and_int_are_distinct():
    assert encode(True) != encode(1)
    assert encode(0) != encode(False)


@pytest.mark.parametrize("bad", [b"", b"X", b"S\x00\x00\x00\x05ab", encode(1) + b"\x00"])
def test_decode_rejects_malformed_input(bad):
    with pytest.raises(ValueError):
        decode(bad)


def test_encode_rejects_unknown_types():
    with pytest.raises(TypeError):
        encode(object())
    with pytest.raises(TypeError):
        encode({1: "non-string key"})


def test_digest_matches_sha256_of_encoding():
    import hashlib
    assert digest("a", 1) == hashlib.sha256(encode(["a", 1])).digest()
    assert digest_bytes(b"abc").hex() == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
    assert len(digest()) == DIGEST_SIZE


def test_fraction_survives_round_trip():
    assert decode(encode(Fraction(-7, 3))) == Fraction(-7, 3)


def test_key_factory_is_deterministic_and_fresh():
    a, b = KeyFactory(b"seed"), KeyFactory(b"seed")
    first = [a.new_key("x").public_key for _ in range(3)]
    assert first == [b.new_key("x").public_key for _ in range(3)]
    assert len(set(first)) == 3
    assert KeyFactory(b"other").new_key("x").public_key != first[0]


def test_signatures_verify_and_detect_tampering():
    key = KeyFactory().new_key()
    sig = key.sign(b"message")
    assert DEFAULT_SCHEME.verify(key.public_key, b"message", sig)
    assert not DEFAULT_SCHEME.verify(key.public_key, b"messagf", sig)
    assert not DEFAULT_SCHEME.verify(key.public_key, b"message", sig[:-1] + bytes([sig[-1] ^ 1]))
    assert not DEFAULT_SCHEME.verify(b"short", b"message", sig)


def test_pseudonym_address_is_derived_from_the_key():
    key = KeyFactory().new_key()
    signer = Signer.pseudonym(key)
    assert signer.submitter == address_of(key.public_key)
    assert signer.submitter.startswith("0x") and len(signer.submitter) == 42
    int(signer.submitter, 16)
