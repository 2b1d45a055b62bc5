"""Canonical binary encoding and the 256-bit digest used across the ledgers.

The encoding is type-tagged, length-prefixed and field-ordered (mapping keys
are sorted by their UTF-8 bytes), so equal values always produce equal bytes.
Sets are encoded as lists sorted by their element encodings; they decode back
as lists.
"""

from __future__ import annotations

import hashlib
import struct
from enum import Enum
from fractions import Fraction
from typing import Any

DIGEST_SIZE = 32

_LEN = struct.Struct(">I")


def _length(n: int) -> bytes:
    return _LEN.pack(n)


def encode(value: Any) -> bytes:
    """Encode ``value`` canonically."""
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _encode_into(value: Any, out: bytearray) -> None:
    if isinstance(value, Enum):
        value = value.value
    if value is None:
        out += b"N"
    elif value is True:
        out += b"T"
    elif value is False:
        out += b"F"
    elif isinstance(value, int):
        raw = value.to_bytes((value.bit_length() + 8) // 8, "big", signed=True)
        out += b"I" + _length(len(raw)) + raw
    elif isinstance(value, Fraction):
        out += b"Q"
        _encode_into(value.numerator, out)
        _encode_into(value.denominator, out)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"S" + _length(len(raw)) + raw
    elif isinstance(value, (bytes, bytearray, memoryview)):
        raw = bytes(value)
        out += b"B" + _length(len(raw)) + raw
    elif isinstance(value, (list, tuple)):
        out += b"L" + _length(len(value))
        for item in value:
            _encode_into(item, out)
    elif isinstance(value, (set, frozenset)):
        items = sorted(encode(item) for item in value)
        out += b"L" + _length(len(items))
        for raw in items:
            out += raw
    elif isinstance(value, dict):
        keys = []
        for key in value:
            if isinstance(key, Enum):
                key = key.value
            if not isinstance(key, str):
                raise TypeError(f"mapping keys must be str, got {type(key).__name__}")
            keys.append(key)
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate mapping keys after enum normalisation")
        pairs = sorted(zip(keys, value.values()), key=lambda kv: kv[0].encode("utf-8"))
        out += b"D" + _length(len(pairs))
        for key, item in pairs:
            _encode_into(key, out)
            _encode_into(item, out)
    else:
        raise TypeError(f"cannot canonically encode {type(value).__name__}")


def decode(data: bytes) -> Any:
    """Inverse of :func:`encode` (sets come back as lists)."""
    value, offset = _decode_at(memoryview(data), 0)
    if offset != len(data):
        raise ValueError(f"trailing bytes after offset {offset}")
    return value


def _read_len(buf: memoryview, offset: int) -> tuple[int, int]:
    if offset + 4 > len(buf):
        raise ValueError("truncated length prefix")
    return _LEN.unpack_from(buf, offset)[0], offset + 4


def _take(buf: memoryview, offset: int, n: int) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise ValueError("truncated body")
    return bytes(buf[offset:offset + n]), offset + n


def _decode_at(buf: memoryview, offset: int) -> tuple[Any, int]:
    if offset >= len(buf):
        raise ValueError("unexpected end of input")
    tag = bytes(buf[offset:offset + 1])
    offset += 1
    if tag == b"N":
        return None, offset
    if tag == b"T":
        return True, offset
    if tag == b"F":
        return False, offset
    if tag == b"I":
        n, offset = _read_len(buf, offset)
        raw, offset = _take(buf, offset, n)
        return int.from_bytes(raw, "big", signed=True), offset
    if tag == b"Q":
        num, offset = _decode_at(buf, offset)
        den, offset = _decode_at(buf, offset)
        return Fraction(num, den), offset
    if tag == b"S":
        n, offset = _read_len(buf, offset)
        raw, offset = _take(buf, offset, n)
        return raw.decode("utf-8"), offset
    if tag == b"B":
        n, offset = _read_len(buf, offset)
        return _take(buf, offset, n)
    if tag == b"L":
        n, offset = _read_len(buf, offset)
        items = []
        for _ in range(n):
            item, offset = _decode_at(buf, offset)
            items.append(item)
        return items, offset
    if tag == b"D":
        n, offset = _read_len(buf, offset)
        result = {}
        for _ in range(n):
            key, offset = _decode_at(buf, offset)
            result[key], offset = _decode_at(buf, offset)
        return result, offset
    raise ValueError(f"unknown tag {tag!r} at offset {offset - 1}")


def digest(*fields: Any) -> bytes:
    """SHA-256 over the canonical encoding of ``fields``."""
    return hashlib.sha256(encode(list(fields))).digest()


def digest_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()
