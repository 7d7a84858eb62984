"""Identity keys, signatures, content digests, and committee-sealed envelopes.

An identity bundles two key pairs behind one fingerprint: an Ed25519 pair for
signatures and an X25519 pair for envelope sealing. The public halves are
concatenated into a single 64-byte public key bundle, and the fingerprint is
the digest of that bundle.

Sealing is hybrid: a fresh random content key encrypts the bundle's canonical
encoding with AES-256-GCM, and the content key is wrapped once per recipient
using an ephemeral X25519 exchange plus HKDF. Recipients outside the wrap
list cannot recover the content key; any mutation of the ciphertext or a
wrapped key fails the GCM tag or the content digest check.
"""

from __future__ import annotations

import base64
import binascii
import functools
import hashlib
import os
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import codec
from .codec import Reader, canonical_encode
from .errors import (
    AccessError,
    ArtifactError,
    CodecError,
    CommitteeError,
    KeyMaterialError,
    TamperError,
)

DIGEST_LEN = 32
PUBLIC_KEY_LEN = 64  # 32-byte signing half + 32-byte sealing half
PRIVATE_KEY_LEN = 64
COMMITTEE_SIZE = 5

_WRAP_INFO = b"claimstake envelope key wrap v1"
_GCM_NONCE_LEN = 12
_CONTENT_KEY_LEN = 32


def digest(message: bytes) -> bytes:
    """32-byte SHA-256 digest, the hash used everywhere in the ledger."""
    return hashlib.sha256(message).digest()


@dataclass(frozen=True, order=True, slots=True)
class KeyFingerprint:
    """Digest of a public key bundle; the on-ledger name of an identity."""

    digest: bytes

    def __post_init__(self):
        if len(self.digest) != DIGEST_LEN:
            raise KeyMaterialError(
                f"fingerprint must be {DIGEST_LEN} bytes, got {len(self.digest)}"
            )

    def __hash__(self) -> int:
        return hash(self.digest)

    def hex(self) -> str:
        return self.digest.hex()

    def short(self) -> str:
        return self.digest.hex()[:12]


def fingerprint_of(public_key: bytes) -> KeyFingerprint:
    return KeyFingerprint(digest(public_key))


@canonical_encode.register
def _(value: KeyFingerprint) -> bytes:
    return codec.encode_bytes(value.digest)


def decode_fingerprint(reader: Reader) -> KeyFingerprint:
    return KeyFingerprint(reader.bytes_(DIGEST_LEN))


@functools.lru_cache(maxsize=4096)
def _signing_key(raw: bytes) -> Ed25519PublicKey:
    try:
        return Ed25519PublicKey.from_public_bytes(raw)
    except Exception as exc:
        raise KeyMaterialError("malformed signing public key") from exc


@functools.lru_cache(maxsize=4096)
def _sealing_key(raw: bytes) -> X25519PublicKey:
    try:
        return X25519PublicKey.from_public_bytes(raw)
    except Exception as exc:
        raise KeyMaterialError("malformed sealing public key") from exc


def _split_public(public_key: bytes) -> tuple[bytes, bytes]:
    if len(public_key) != PUBLIC_KEY_LEN:
        raise KeyMaterialError(
            f"public key bundle must be {PUBLIC_KEY_LEN} bytes, got {len(public_key)}"
        )
    return public_key[:32], public_key[32:]


@dataclass(frozen=True)
class Identity:
    """A key pair plus its fingerprint. The private half never leaves the
    owning agent and is excluded from every canonical encoding."""

    public_key: bytes
    private_key: bytes = field(repr=False)
    fingerprint: KeyFingerprint = field(init=False)

    def __post_init__(self):
        _split_public(self.public_key)
        if len(self.private_key) != PRIVATE_KEY_LEN:
            raise KeyMaterialError("private key bundle has wrong length")
        object.__setattr__(self, "fingerprint", fingerprint_of(self.public_key))

    @functools.cached_property
    def _signer(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.private_key[:32])

    @functools.cached_property
    def _sealer(self) -> X25519PrivateKey:
        return X25519PrivateKey.from_private_bytes(self.private_key[32:])


def generate_identity(rng_seed: bytes | None = None) -> Identity:
    """Create an identity, deterministically when a seed is supplied."""
    if rng_seed is None:
        sign_seed = os.urandom(32)
        seal_seed = os.urandom(32)
    else:
        sign_seed = digest(b"claimstake identity sign" + rng_seed)
        seal_seed = digest(b"claimstake identity seal" + rng_seed)
    signer = Ed25519PrivateKey.from_private_bytes(sign_seed)
    sealer = X25519PrivateKey.from_private_bytes(seal_seed)
    public = signer.public_key().public_bytes(
        Encoding.Raw, PublicFormat.Raw
    ) + sealer.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return Identity(public_key=public, private_key=sign_seed + seal_seed)


def sign(identity: Identity, message: bytes) -> bytes:
    return identity._signer.sign(message)


@functools.lru_cache(maxsize=8192)
def _verify_cached(signing_public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        _signing_key(signing_public).verify(signature, message)
        return True
    except InvalidSignature:
        return False


def verify_signature(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff the signature was made over this exact message by the key."""
    signing_raw, _ = _split_public(public_key)
    return _verify_cached(signing_raw, bytes(message), bytes(signature))


@dataclass(frozen=True, slots=True)
class Artifact:
    """One named supporting document, held as base64 text."""

    name: str
    content: bytes  # base64 text form

    def __post_init__(self):
        try:
            base64.b64decode(self.content, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ArtifactError(f"artifact {self.name!r} is not valid base64") from exc

    def payload(self) -> bytes:
        """The decoded document bytes."""
        return base64.b64decode(self.content, validate=True)


@dataclass(frozen=True, slots=True)
class ArtifactBundle:
    """The base64-encoded supporting documents attached to one claim."""

    artifacts: tuple[Artifact, ...]

    @classmethod
    def from_payloads(cls, items: list[tuple[str, bytes]]) -> "ArtifactBundle":
        return cls(
            tuple(Artifact(name, base64.b64encode(raw)) for name, raw in items)
        )


@canonical_encode.register
def _(value: Artifact) -> bytes:
    return codec.encode_text(value.name) + codec.encode_bytes(value.content)


@canonical_encode.register
def _(value: ArtifactBundle) -> bytes:
    return codec.encode_list([canonical_encode(a) for a in value.artifacts])


def decode_artifact(reader: Reader) -> Artifact:
    return Artifact(name=reader.text(), content=reader.bytes_())


def decode_artifact_bundle(reader: Reader) -> ArtifactBundle:
    return ArtifactBundle(tuple(reader.list_(decode_artifact)))


@dataclass(frozen=True, slots=True)
class WrappedKey:
    nonce: bytes
    sealed_key: bytes


@dataclass(frozen=True, slots=True)
class SealedBundle:
    """An artifact bundle sealed so that exactly the committee can read it.

    `wrapped_keys` is index-aligned with `recipients`; `content_digest` is the
    digest of the plaintext canonical encoding, checked again after opening.
    """

    recipients: tuple[KeyFingerprint, ...]
    ephemeral_public_key: bytes
    wrapped_keys: tuple[WrappedKey, ...]
    content_nonce: bytes
    ciphertext: bytes
    content_digest: bytes


@canonical_encode.register
def _(value: WrappedKey) -> bytes:
    return codec.encode_bytes(value.nonce) + codec.encode_bytes(value.sealed_key)


@canonical_encode.register
def _(value: SealedBundle) -> bytes:
    return (
        codec.encode_list([canonical_encode(r) for r in value.recipients])
        + codec.encode_bytes(value.ephemeral_public_key)
        + codec.encode_list([canonical_encode(w) for w in value.wrapped_keys])
        + codec.encode_bytes(value.content_nonce)
        + codec.encode_bytes(value.ciphertext)
        + codec.encode_bytes(value.content_digest)
    )


def _wrap_key_for(shared_secret: bytes, ephemeral_public: bytes, recipient: bytes) -> bytes:
    kdf = HKDF(
        algorithm=SHA256(),
        length=_CONTENT_KEY_LEN,
        salt=None,
        info=_WRAP_INFO + ephemeral_public + recipient,
    )
    return kdf.derive(shared_secret)


def seal_for_committee(
    bundle: ArtifactBundle,
    committee_keys: list[bytes],
    rng=os.urandom,
) -> SealedBundle:
    """Seal a bundle to exactly the five committee public key bundles.

    `rng` exists so simulations can drive sealing from a deterministic byte
    stream; it must behave like ``os.urandom``.
    """
    if len(committee_keys) != COMMITTEE_SIZE:
        raise CommitteeError(
            f"envelope needs exactly {COMMITTEE_SIZE} recipients, got {len(committee_keys)}"
        )
    if len(set(committee_keys)) != COMMITTEE_SIZE:
        raise CommitteeError("duplicate recipient keys in committee")

    plaintext = canonical_encode(bundle)
    content_digest = digest(plaintext)
    content_key = rng(_CONTENT_KEY_LEN)
    content_nonce = rng(_GCM_NONCE_LEN)
    ciphertext = AESGCM(content_key).encrypt(content_nonce, plaintext, None)

    ephemeral = X25519PrivateKey.from_private_bytes(rng(32))
    ephemeral_public = ephemeral.public_key().public_bytes(
        Encoding.Raw, PublicFormat.Raw
    )

    recipients = []
    wrapped = []
    for public in committee_keys:
        _, sealing_raw = _split_public(public)
        shared = ephemeral.exchange(_sealing_key(sealing_raw))
        wrap_key = _wrap_key_for(shared, ephemeral_public, public)
        nonce = rng(_GCM_NONCE_LEN)
        sealed_key = AESGCM(wrap_key).encrypt(nonce, content_key, None)
        recipients.append(fingerprint_of(public))
        wrapped.append(WrappedKey(nonce=nonce, sealed_key=sealed_key))

    return SealedBundle(
        recipients=tuple(recipients),
        ephemeral_public_key=ephemeral_public,
        wrapped_keys=tuple(wrapped),
        content_nonce=content_nonce,
        ciphertext=ciphertext,
        content_digest=content_digest,
    )


def open_envelope(sealed: SealedBundle, identity: Identity) -> ArtifactBundle:
    """Recover the plaintext bundle; only listed recipients can succeed."""
    try:
        index = sealed.recipients.index(identity.fingerprint)
    except ValueError:
        raise AccessError(
            f"{identity.fingerprint.short()} is not an envelope recipient"
        ) from None

    shared = identity._sealer.exchange(_sealing_key(sealed.ephemeral_public_key))
    wrap_key = _wrap_key_for(shared, sealed.ephemeral_public_key, identity.public_key)
    entry = sealed.wrapped_keys[index]
    try:
        content_key = AESGCM(wrap_key).decrypt(entry.nonce, entry.sealed_key, None)
        plaintext = AESGCM(content_key).decrypt(
            sealed.content_nonce, sealed.ciphertext, None
        )
    except InvalidTag as exc:
        raise TamperError("envelope failed authenticated decryption") from exc

    if digest(plaintext) != sealed.content_digest:
        raise TamperError("envelope content digest mismatch")
    try:
        return codec.decode_with(plaintext, decode_artifact_bundle)
    except (CodecError, ArtifactError) as exc:
        raise TamperError("envelope plaintext is not a valid bundle") from exc
