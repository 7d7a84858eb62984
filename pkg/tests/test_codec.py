"""Canonical encoding: determinism, injectivity, and decode round-trips."""

import pytest
from hypothesis import given, strategies as st

from claimstake import codec
from claimstake.chain import (
    Attestation,
    Block,
    Claim,
    ClaimEntry,
    decode_block,
    decode_claim,
)
from claimstake.codec import Reader, canonical_encode, decode_with
from claimstake.envelope import (
    Artifact,
    ArtifactBundle,
    KeyFingerprint,
    decode_artifact_bundle,
    digest,
)
from claimstake.errors import CodecError


def fp(i: int) -> KeyFingerprint:
    return KeyFingerprint(digest(b"fp%d" % i))


def test_segments_roundtrip_primitives():
    encoded = (
        codec.encode_bytes(b"abc")
        + codec.encode_u64(2**40 + 7)
        + codec.encode_bool(True)
        + codec.encode_text("héllo")
    )
    reader = Reader(encoded)
    assert reader.bytes_() == b"abc"
    assert reader.u64() == 2**40 + 7
    assert reader.bool_() is True
    assert reader.text() == "héllo"
    reader.expect_end()


def test_list_roundtrip_and_empty():
    empty = codec.encode_list([])
    assert Reader(empty).list_(lambda r: r.bytes_()) == []
    three = codec.encode_list([codec.encode_u64(i) for i in range(3)])
    assert Reader(three).list_(lambda r: r.u64()) == [0, 1, 2]


def test_truncated_and_trailing_inputs_fail():
    data = codec.encode_u64(9)
    with pytest.raises(CodecError):
        Reader(data[:-3]).u64()
    with pytest.raises(CodecError):
        decode_with(data + b"\x00", lambda r: r.u64())
    with pytest.raises(CodecError):
        Reader(codec.encode_bytes(b"\x05")).bool_()


def test_u64_range_enforced():
    with pytest.raises(ValueError):
        codec.encode_u64(-1)
    with pytest.raises(ValueError):
        codec.encode_u64(2**64)


def sample_claim(nonce: int = 5) -> Claim:
    return Claim(
        template_id="pcr-negative",
        claimant=fp(1),
        nonce=nonce,
        asserted_value="PCR-NEGATIVE-2025-01-01",
    )


def test_claim_encoding_deterministic_and_nonce_sensitive():
    a, b = sample_claim(), sample_claim()
    assert canonical_encode(a) == canonical_encode(b)
    assert canonical_encode(sample_claim(nonce=6)) != canonical_encode(a)


def test_claim_decode_roundtrip():
    claim = sample_claim()
    assert decode_with(canonical_encode(claim), decode_claim) == claim


def sample_block(claims=()) -> Block:
    return Block(
        height=3,
        parent_digest=digest(b"parent"),
        claims=tuple(claims),
        validator=fp(9),
        validator_signature=b"\x01" * 64,
        attestations=(
            Attestation(member=fp(2), verdict=True, signature=b"\x02" * 64),
            Attestation(member=fp(3), verdict=False, signature=b"\x03" * 64),
        ),
        seed_commitment=digest(b"seed"),
    )


def test_block_decode_roundtrip():
    entry = ClaimEntry(
        claim=sample_claim(), package_digest=digest(b"pkg"), claimant_signature=b"s" * 64
    )
    block = sample_block([entry])
    assert decode_with(canonical_encode(block), decode_block) == block


def test_empty_claim_list_encodes_zero_count():
    block = sample_block()
    # the claims list segment carries a zero count and no payload segments
    reader = Reader(canonical_encode(block))
    reader.u64()  # height
    reader.bytes_()  # parent
    assert reader.list_(lambda r: r.bytes_()) == []


@given(
    st.lists(
        st.tuples(st.text(max_size=20), st.binary(max_size=64)),
        max_size=5,
    )
)
def test_bundle_roundtrip_property(items):
    bundle = ArtifactBundle.from_payloads(items)
    assert decode_with(canonical_encode(bundle), decode_artifact_bundle) == bundle


@given(st.binary(max_size=32), st.binary(max_size=32))
def test_byte_field_encoding_injective(a, b):
    if a != b:
        assert codec.encode_bytes(a) != codec.encode_bytes(b)


@given(st.text(max_size=16), st.binary(max_size=16), st.text(max_size=16), st.binary(max_size=16))
def test_artifact_encoding_injective(name_a, pay_a, name_b, pay_b):
    art_a = ArtifactBundle.from_payloads([(name_a, pay_a)])
    art_b = ArtifactBundle.from_payloads([(name_b, pay_b)])
    if (name_a, pay_a) != (name_b, pay_b):
        assert canonical_encode(art_a) != canonical_encode(art_b)
    else:
        assert canonical_encode(art_a) == canonical_encode(art_b)
