"""Canonical byte encoding shared by every ledger type.

All consensus-relevant values are serialized with one deterministic, injective
scheme so that every node hashes and signs identical bytes:

  * each field becomes one *segment*: a 4-byte big-endian length prefix
    followed by the payload;
  * unsigned integers are 8-byte big-endian payloads;
  * booleans are a single byte (0x00 / 0x01);
  * text is UTF-8;
  * lists are a segment whose payload is a 4-byte big-endian element count
    followed by the elements, each wrapped in its own segment;
  * optional values are a presence byte segment, followed by the value's
    segment only when present;
  * composite types concatenate their field segments in declaration order,
    and are wrapped in one segment when nested inside another type.

`canonical_encode` is a singledispatch function; each module registers the
types it owns. Decoding is schema-directed via `Reader`, since segment
payloads are only meaningful relative to a known field layout.
"""

from __future__ import annotations

import functools

from .errors import CodecError

_LEN_WIDTH = 4
_U64_MAX = 2**64 - 1


@functools.singledispatch
def canonical_encode(value) -> bytes:
    """Encode a registered ledger type to its canonical bytes."""
    raise TypeError(f"no canonical encoding registered for {type(value).__name__}")


def segment(payload: bytes) -> bytes:
    return len(payload).to_bytes(_LEN_WIDTH, "big") + payload


def encode_bytes(value: bytes) -> bytes:
    return segment(bytes(value))


def encode_u64(value: int) -> bytes:
    if not 0 <= value <= _U64_MAX:
        raise ValueError(f"u64 out of range: {value}")
    return segment(value.to_bytes(8, "big"))


def encode_bool(value: bool) -> bytes:
    return segment(b"\x01" if value else b"\x00")


def encode_text(value: str) -> bytes:
    return segment(value.encode("utf-8"))


def encode_list(encoded_items: list[bytes]) -> bytes:
    body = len(encoded_items).to_bytes(_LEN_WIDTH, "big")
    body += b"".join(segment(item) for item in encoded_items)
    return segment(body)


def encode_optional(encoded_value: bytes | None) -> bytes:
    if encoded_value is None:
        return encode_bool(False)
    return encode_bool(True) + segment(encoded_value)


class Reader:
    """Sequential decoder over one canonical-encoded byte string."""

    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def segment(self) -> bytes:
        data, pos = self._data, self._pos
        if pos + _LEN_WIDTH > len(data):
            raise CodecError("truncated segment length")
        length = int.from_bytes(data[pos : pos + _LEN_WIDTH], "big")
        pos += _LEN_WIDTH
        if pos + length > len(data):
            raise CodecError("truncated segment payload")
        self._pos = pos + length
        return data[pos : pos + length]

    def bytes_(self, expected_len: int | None = None) -> bytes:
        payload = self.segment()
        if expected_len is not None and len(payload) != expected_len:
            raise CodecError(f"expected {expected_len}-byte payload, got {len(payload)}")
        return payload

    def u64(self) -> int:
        payload = self.segment()
        if len(payload) != 8:
            raise CodecError("u64 payload must be 8 bytes")
        return int.from_bytes(payload, "big")

    def bool_(self) -> bool:
        payload = self.segment()
        if payload == b"\x01":
            return True
        if payload == b"\x00":
            return False
        raise CodecError("boolean payload must be 0x00 or 0x01")

    def text(self) -> str:
        try:
            return self.segment().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError("invalid UTF-8 text") from exc

    def list_(self, decode_item) -> list:
        body = Reader(self.segment())
        if body._pos + _LEN_WIDTH > len(body._data):
            raise CodecError("truncated list count")
        count = int.from_bytes(body._data[: _LEN_WIDTH], "big")
        body._pos = _LEN_WIDTH
        items = [decode_item(Reader(body.segment())) for _ in range(count)]
        if body._pos != len(body._data):
            raise CodecError("trailing bytes after list elements")
        return items

    def optional(self, decode_value):
        if not self.bool_():
            return None
        return decode_value(Reader(self.segment()))

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise CodecError("trailing bytes after value")


def decode_with(data: bytes, decode_value):
    """Decode one complete value and require the input to be fully consumed."""
    reader = Reader(data)
    value = decode_value(reader)
    reader.expect_end()
    return value
