"""Append-only hash-linked ledger of accepted claim blocks.

State evolves through exactly two events: an accepted block (appended to the
chain) and a rejected round (no block, but the proposing validator is slashed
and the randomness seed still advances). Both events are kept in the state so
that replaying them from genesis reproduces the state byte-for-byte under the
canonical encoding.

`apply_block` and `apply_rejection` are pure transitions: the input state is
never modified and stays fully usable. Internally, linear histories share one
append-only block store, so extending the tip is O(1); applying an event to a
non-tip state forks the store by copying the relevant prefix.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

from . import codec
from .codec import Reader, canonical_encode
from .envelope import (
    DIGEST_LEN,
    KeyFingerprint,
    decode_fingerprint,
    digest,
    fingerprint_of,
    verify_signature,
)
from .errors import (
    ChainError,
    ClaimstakeError,
    ConfigError,
    ConsensusError,
    SignatureError,
    TemplateError,
)

GENESIS_PARENT = b"\x00" * DIGEST_LEN

# Concurrence rule: a block needs at least this many true attestor verdicts
# out of four. Two liars therefore cannot reject an honest block, and a false
# block needs the validator plus two attestors to pass.
ATTESTOR_COUNT = 4
CONCURRENCE_THRESHOLD = 2


@dataclass(frozen=True, slots=True)
class ClaimTemplate:
    """A registered claim kind: an identifier plus the human-readable
    criteria its supporting artifacts must satisfy."""

    template_id: str
    criteria: str

    def __post_init__(self):
        if not self.template_id:
            raise ConfigError("template_id must be non-empty")
        if not self.criteria:
            raise ConfigError(f"template {self.template_id!r} has empty criteria")


@dataclass(frozen=True, slots=True)
class Claim:
    """An unverified statement by a claimant against a registered template."""

    template_id: str
    claimant: KeyFingerprint
    nonce: int
    asserted_value: str


@dataclass(frozen=True, slots=True)
class ClaimEntry:
    """A claim as recorded on-chain: the claim, the digest of its full
    ticket package (claim plus artifacts), and the claimant's signature over
    both. The artifacts themselves are never stored on the chain."""

    claim: Claim
    package_digest: bytes
    claimant_signature: bytes


@dataclass(frozen=True, slots=True)
class Attestation:
    member: KeyFingerprint
    verdict: bool
    signature: bytes


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    parent_digest: bytes
    claims: tuple[ClaimEntry, ...]
    validator: KeyFingerprint
    validator_signature: bytes
    attestations: tuple[Attestation, ...]
    seed_commitment: bytes


@dataclass(frozen=True, slots=True)
class StakeEntry:
    stake: int
    eligible: bool


@dataclass(frozen=True)
class StakeLedger:
    """Stake and committee eligibility per identity fingerprint."""

    entries: dict[KeyFingerprint, StakeEntry]

    def total_stake(self) -> int:
        return sum(e.stake for e in self.entries.values())

    def eligible_members(self) -> list[tuple[KeyFingerprint, int]]:
        return [
            (fp, entry.stake)
            for fp, entry in self.entries.items()
            if entry.eligible and entry.stake > 0
        ]

    def eligible_count(self) -> int:
        return sum(1 for e in self.entries.values() if e.eligible and e.stake > 0)

    @functools.cached_property
    def sorted_eligible(self) -> tuple[tuple[KeyFingerprint, int], ...]:
        """Eligible entries in fingerprint order; the committee draw order.

        Ledgers are immutable, so this is computed once per ledger rather
        than once per round.
        """
        return tuple(sorted(self.eligible_members(), key=lambda m: m[0].digest))


@dataclass(frozen=True, slots=True)
class RejectionRecord:
    """A rejected round: who was slashed and which proposed block (by its
    unattested digest) the seed advanced over. `after_height` is the number
    of accepted blocks at the time of the rejection."""

    after_height: int
    slashed: KeyFingerprint
    rejected_digest: bytes


@dataclass(frozen=True, slots=True)
class GenesisOrigin:
    """Snapshot of the initial ledger and seed, kept so any state can be
    re-derived from scratch."""

    stake: StakeLedger
    seed: bytes


@dataclass(frozen=True, slots=True)
class GenesisStaker:
    public_key: bytes
    stake: int


@dataclass(frozen=True, slots=True)
class GenesisConfig:
    identities: tuple[GenesisStaker, ...]
    templates: tuple[ClaimTemplate, ...]
    genesis_seed: bytes
    min_stake: int


@dataclass(frozen=True, slots=True)
class ClaimRecord:
    """Result of a claim-status query: the accepted claim, its package
    digest, and the height of the block that accepted it."""

    claim: Claim
    package_digest: bytes
    height: int


# ---------------------------------------------------------------------------
# Canonical encodings
# ---------------------------------------------------------------------------

@canonical_encode.register
def _(value: ClaimTemplate) -> bytes:
    return codec.encode_text(value.template_id) + codec.encode_text(value.criteria)


@canonical_encode.register
def _(value: Claim) -> bytes:
    return (
        codec.encode_text(value.template_id)
        + canonical_encode(value.claimant)
        + codec.encode_u64(value.nonce)
        + codec.encode_text(value.asserted_value)
    )


@canonical_encode.register
def _(value: ClaimEntry) -> bytes:
    return (
        codec.segment(canonical_encode(value.claim))
        + codec.encode_bytes(value.package_digest)
        + codec.encode_bytes(value.claimant_signature)
    )


@canonical_encode.register
def _(value: Attestation) -> bytes:
    return (
        canonical_encode(value.member)
        + codec.encode_bool(value.verdict)
        + codec.encode_bytes(value.signature)
    )


@canonical_encode.register
def _(value: Block) -> bytes:
    return (
        codec.encode_u64(value.height)
        + codec.encode_bytes(value.parent_digest)
        + codec.encode_list([canonical_encode(c) for c in value.claims])
        + canonical_encode(value.validator)
        + codec.encode_bytes(value.validator_signature)
        + codec.encode_list([canonical_encode(a) for a in value.attestations])
        + codec.encode_bytes(value.seed_commitment)
    )


@canonical_encode.register
def _(value: StakeLedger) -> bytes:
    items = []
    for fp in sorted(value.entries, key=lambda f: f.digest):
        entry = value.entries[fp]
        items.append(
            canonical_encode(fp)
            + codec.encode_u64(entry.stake)
            + codec.encode_bool(entry.eligible)
        )
    return codec.encode_list(items)


@canonical_encode.register
def _(value: RejectionRecord) -> bytes:
    return (
        codec.encode_u64(value.after_height)
        + canonical_encode(value.slashed)
        + codec.encode_bytes(value.rejected_digest)
    )


@canonical_encode.register
def _(value: GenesisOrigin) -> bytes:
    return codec.segment(canonical_encode(value.stake)) + codec.encode_bytes(value.seed)


def decode_claim(reader: Reader) -> Claim:
    return Claim(
        template_id=reader.text(),
        claimant=decode_fingerprint(reader),
        nonce=reader.u64(),
        asserted_value=reader.text(),
    )


def decode_claim_entry(reader: Reader) -> ClaimEntry:
    return ClaimEntry(
        claim=decode_claim(Reader(reader.segment())),
        package_digest=reader.bytes_(DIGEST_LEN),
        claimant_signature=reader.bytes_(),
    )


def decode_attestation(reader: Reader) -> Attestation:
    return Attestation(
        member=decode_fingerprint(reader),
        verdict=reader.bool_(),
        signature=reader.bytes_(),
    )


def decode_block(reader: Reader) -> Block:
    return Block(
        height=reader.u64(),
        parent_digest=reader.bytes_(DIGEST_LEN),
        claims=tuple(reader.list_(decode_claim_entry)),
        validator=decode_fingerprint(reader),
        validator_signature=reader.bytes_(),
        attestations=tuple(reader.list_(decode_attestation)),
        seed_commitment=reader.bytes_(DIGEST_LEN),
    )


def decode_rejection_record(reader: Reader) -> RejectionRecord:
    return RejectionRecord(
        after_height=reader.u64(),
        slashed=decode_fingerprint(reader),
        rejected_digest=reader.bytes_(DIGEST_LEN),
    )


# ---------------------------------------------------------------------------
# Block digests and signing payloads
# ---------------------------------------------------------------------------

def block_core_digest(
    height: int,
    parent_digest: bytes,
    claims: tuple[ClaimEntry, ...],
    validator: KeyFingerprint,
) -> bytes:
    """Digest over the block content the validator commits to before signing;
    the seed-evolution input on acceptance."""
    return digest(
        codec.encode_u64(height)
        + codec.encode_bytes(parent_digest)
        + codec.encode_list([canonical_encode(c) for c in claims])
        + canonical_encode(validator)
    )


def expected_seed_commitment(previous_seed: bytes, core_digest: bytes) -> bytes:
    return digest(previous_seed + core_digest)


def mint_signing_bytes(block: Block) -> bytes:
    return (
        codec.encode_u64(block.height)
        + codec.encode_bytes(block.parent_digest)
        + codec.encode_list([canonical_encode(c) for c in block.claims])
        + canonical_encode(block.validator)
        + codec.encode_bytes(block.seed_commitment)
    )


def unattested_digest(block: Block) -> bytes:
    """Digest of the block without its attestations; what attestors sign over
    and what the seed advances over when the block is rejected."""
    if block.attestations:
        block = replace(block, attestations=())
    return digest(canonical_encode(block))


def attestation_message(block_unattested_digest: bytes, verdict: bool) -> bytes:
    """The bytes an attestor signs: the unattested block digest plus verdict."""
    return block_unattested_digest + (b"\x01" if verdict else b"\x00")


def block_digest(block: Block) -> bytes:
    """Digest of the full block, used for parent linkage."""
    return digest(canonical_encode(block))


def claim_signing_bytes(claim: Claim, package_digest: bytes) -> bytes:
    return canonical_encode(claim) + package_digest


# ---------------------------------------------------------------------------
# Chain state
# ---------------------------------------------------------------------------

class _BlocksView:
    """Read-only sequence over the accepted blocks of one state."""

    __slots__ = ("_store", "_length")

    def __init__(self, store: list[Block], length: int):
        self._store = store
        self._length = length

    def __len__(self) -> int:
        return self._length

    def __getitem__(self, index):
        if isinstance(index, slice):
            return list(self._store[: self._length])[index]
        if index < 0:
            index += self._length
        if not 0 <= index < self._length:
            raise IndexError("block index out of range")
        return self._store[index]

    def __iter__(self):
        for i in range(self._length):
            yield self._store[i]

    def __reversed__(self):
        for i in range(self._length - 1, -1, -1):
            yield self._store[i]


class ChainState:
    """The shared ledger state: accepted blocks, templates, stake ledger,
    the current randomness seed, rejection records, and the genesis origin.

    Instances are immutable snapshots; transitions return new states.
    """

    __slots__ = (
        "_store",
        "_height",
        "templates",
        "stake",
        "current_seed",
        "rejections",
        "origin",
        "_claim_index",
        "_claim_count",
        "_tip_digest",
    )

    def __init__(
        self,
        store: list[Block],
        height: int,
        templates: tuple[ClaimTemplate, ...],
        stake: StakeLedger,
        current_seed: bytes,
        rejections: tuple[RejectionRecord, ...],
        origin: GenesisOrigin,
        claim_index: dict[tuple[KeyFingerprint, int], int],
        claim_count: int,
        tip_digest: bytes | None = None,
    ):
        self._store = store
        self._height = height
        self.templates = templates
        self.stake = stake
        self.current_seed = current_seed
        self.rejections = rejections
        self.origin = origin
        self._claim_index = claim_index
        self._claim_count = claim_count
        self._tip_digest = tip_digest

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChainState):
            return NotImplemented
        return canonical_encode(self) == canonical_encode(other)

    @property
    def blocks(self) -> _BlocksView:
        return _BlocksView(self._store, self._height)

    @property
    def height(self) -> int:
        """Number of accepted blocks; also the height of the next block."""
        return self._height

    @property
    def tip(self) -> Block | None:
        return self._store[self._height - 1] if self._height else None

    def tip_digest(self) -> bytes:
        if self._tip_digest is None:
            tip = self.tip
            self._tip_digest = (
                GENESIS_PARENT if tip is None else block_digest(tip)
            )
        return self._tip_digest

    def template_ids(self) -> set[str]:
        return {t.template_id for t in self.templates}

    def has_claim_key(self, claimant: KeyFingerprint, nonce: int) -> bool:
        height = self._live_claim_index().get((claimant, nonce))
        return height is not None and height < self._height

    def _live_claim_index(self) -> dict[tuple[KeyFingerprint, int], int]:
        return self._claim_index

    def _materialized(self):
        """Private store/index suitable for extension from this snapshot.

        Extending the tip of a linear history reuses the shared structures;
        extending an older snapshot copies its prefix first.
        """
        if len(self._store) == self._height:
            store = self._store
        else:
            store = self._store[: self._height]
        if len(self._claim_index) == self._claim_count:
            index = self._claim_index
        else:
            index = {
                key: h for key, h in self._claim_index.items() if h < self._height
            }
        return store, index


def genesis_state(config: GenesisConfig) -> ChainState:
    """Build the round-zero state from a genesis configuration."""
    if len(config.genesis_seed) != DIGEST_LEN:
        raise ConfigError(f"genesis seed must be {DIGEST_LEN} bytes")
    if config.min_stake < 0:
        raise ConfigError("minimum stake must be non-negative")

    entries: dict[KeyFingerprint, StakeEntry] = {}
    for staker in config.identities:
        if staker.stake < 0:
            raise ConfigError("stakes must be non-negative")
        fp = fingerprint_of(staker.public_key)
        if fp in entries:
            raise ConfigError(f"duplicate identity fingerprint {fp.short()}")
        entries[fp] = StakeEntry(
            stake=staker.stake, eligible=staker.stake >= config.min_stake
        )

    seen_templates: set[str] = set()
    for template in config.templates:
        if template.template_id in seen_templates:
            raise ConfigError(f"duplicate template_id {template.template_id!r}")
        seen_templates.add(template.template_id)

    ledger = StakeLedger(entries=entries)
    origin = GenesisOrigin(stake=ledger, seed=config.genesis_seed)
    return ChainState(
        store=[],
        height=0,
        templates=tuple(config.templates),
        stake=ledger,
        current_seed=config.genesis_seed,
        rejections=(),
        origin=origin,
        claim_index={},
        claim_count=0,
    )


def state_from_origin(
    origin: GenesisOrigin, templates: tuple[ClaimTemplate, ...]
) -> ChainState:
    """Fresh round-zero state for replaying a chain from its recorded origin."""
    return ChainState(
        store=[],
        height=0,
        templates=templates,
        stake=origin.stake,
        current_seed=origin.seed,
        rejections=(),
        origin=origin,
        claim_index={},
        claim_count=0,
    )


def key_directory(config: GenesisConfig) -> dict[KeyFingerprint, bytes]:
    """Fingerprint-to-public-key map for everyone named at genesis."""
    return {fingerprint_of(s.public_key): s.public_key for s in config.identities}


def assemble_unchecked(
    origin: GenesisOrigin,
    templates: tuple[ClaimTemplate, ...],
    blocks: list[Block],
    stake: StakeLedger,
    current_seed: bytes,
    rejections: tuple[RejectionRecord, ...] = (),
) -> ChainState:
    """Assemble a state from parts without validating anything.

    Exists so integrity checks can be pointed at deliberately inconsistent
    states; never use it to build a state you intend to trust.
    """
    index: dict[tuple[KeyFingerprint, int], int] = {}
    for block in blocks:
        for entry in block.claims:
            index[(entry.claim.claimant, entry.claim.nonce)] = block.height
    return ChainState(
        store=list(blocks),
        height=len(blocks),
        templates=templates,
        stake=stake,
        current_seed=current_seed,
        rejections=rejections,
        origin=origin,
        claim_index=index,
        claim_count=len(index),
    )


@canonical_encode.register
def _(value: ChainState) -> bytes:
    return (
        codec.encode_list([canonical_encode(b) for b in value.blocks])
        + codec.encode_list([canonical_encode(t) for t in value.templates])
        + codec.segment(canonical_encode(value.stake))
        + codec.encode_bytes(value.current_seed)
        + codec.encode_list([canonical_encode(r) for r in value.rejections])
        + codec.segment(canonical_encode(value.origin))
    )


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------

def _verify_round_context(state: ChainState, block: Block, directory) -> None:
    """Checks shared by acceptance and rejection: linkage, committee
    membership, the validator signature, and the seed commitment."""
    from .committee import derive_seed, select_committee

    if block.height != state.height:
        raise ChainError(
            f"block height {block.height} does not follow tip height {state.height - 1}"
        )
    if block.parent_digest != state.tip_digest():
        raise ChainError("parent digest does not match the chain tip")

    committee = select_committee(state.stake, derive_seed(state, block.height))
    if block.validator != committee.validator:
        raise ConsensusError("block validator is not the selected validator")
    if {a.member for a in block.attestations} != set(committee.attestors):
        raise ConsensusError("attestations do not match the selected attestors")

    core = block_core_digest(
        block.height, block.parent_digest, block.claims, block.validator
    )
    if block.seed_commitment != expected_seed_commitment(state.current_seed, core):
        raise ConsensusError("seed commitment does not follow the evolution rule")

    validator_key = directory.get(block.validator)
    if validator_key is None:
        raise SignatureError("validator public key unknown")
    if not verify_signature(validator_key, mint_signing_bytes(block), block.validator_signature):
        raise SignatureError("validator signature invalid")

    message_prefix = unattested_digest(block)
    for attestation in block.attestations:
        member_key = directory.get(attestation.member)
        if member_key is None:
            raise SignatureError("attestor public key unknown")
        message = attestation_message(message_prefix, attestation.verdict)
        if not verify_signature(member_key, message, attestation.signature):
            raise SignatureError("attestation signature invalid")


def verify_block(state: ChainState, block: Block, directory) -> None:
    """Raise unless the block is a valid next block for this state."""
    if len(block.attestations) != ATTESTOR_COUNT:
        raise ConsensusError(
            f"block carries {len(block.attestations)} attestations, need {ATTESTOR_COUNT}"
        )
    _verify_round_context(state, block, directory)

    concurring = sum(1 for a in block.attestations if a.verdict)
    if concurring < CONCURRENCE_THRESHOLD:
        raise ConsensusError(
            f"only {concurring} concurring attestations; block was rejected"
        )

    template_ids = state.template_ids()
    seen_keys: set[tuple[KeyFingerprint, int]] = set()
    for entry in block.claims:
        claim = entry.claim
        if claim.template_id not in template_ids:
            raise TemplateError(f"claim references unknown template {claim.template_id!r}")
        key = (claim.claimant, claim.nonce)
        if key in seen_keys or state.has_claim_key(*key):
            raise ChainError("duplicate (claimant, nonce) claim key")
        seen_keys.add(key)
        claimant_key = directory.get(claim.claimant)
        if claimant_key is None:
            raise SignatureError("claimant public key unknown")
        message = claim_signing_bytes(claim, entry.package_digest)
        if not verify_signature(claimant_key, message, entry.claimant_signature):
            raise SignatureError("claimant signature invalid")


def apply_block(state: ChainState, block: Block, directory) -> ChainState:
    """Append a verified block, returning the successor state."""
    verify_block(state, block, directory)

    store, index = state._materialized()
    store.append(block)
    for entry in block.claims:
        index[(entry.claim.claimant, entry.claim.nonce)] = block.height
    return ChainState(
        store=store,
        height=state.height + 1,
        templates=state.templates,
        stake=state.stake,
        current_seed=block.seed_commitment,
        rejections=state.rejections,
        origin=state.origin,
        claim_index=index,
        claim_count=len(index),
        tip_digest=block_digest(block),
    )


def apply_rejection(state: ChainState, block: Block, directory) -> ChainState:
    """Record a rejected round: slash the proposing validator and advance the
    seed over the rejected block's digest. Verifies that the rejection is
    justified (a majority of false attestations) before applying it."""
    from .committee import mark_slashed

    if len(block.attestations) != ATTESTOR_COUNT:
        raise ConsensusError(
            f"rejected block carries {len(block.attestations)} attestations,"
            f" need {ATTESTOR_COUNT}"
        )
    _verify_round_context(state, block, directory)
    concurring = sum(1 for a in block.attestations if a.verdict)
    if concurring >= CONCURRENCE_THRESHOLD:
        raise ConsensusError("block met the concurrence rule; rejection unjustified")

    rejected = unattested_digest(block)
    record = RejectionRecord(
        after_height=state.height, slashed=block.validator, rejected_digest=rejected
    )
    store, index = state._materialized()
    return ChainState(
        store=store,
        height=state.height,
        templates=state.templates,
        stake=mark_slashed(state.stake, block.validator),
        current_seed=digest(state.current_seed + rejected),
        rejections=state.rejections + (record,),
        origin=state.origin,
        claim_index=index,
        claim_count=state._claim_count,
        tip_digest=state._tip_digest,
    )


def verify_chain(state: ChainState, directory) -> bool:
    """True iff replaying every recorded event from genesis reproduces this
    state byte-for-byte under the canonical encoding.

    Rejected rounds are replayed from their rejection records; a chain with
    no rejections is verified purely from its blocks.
    """
    rebuilt = state_from_origin(state.origin, state.templates)
    by_position: dict[int, list[RejectionRecord]] = {}
    for record in state.rejections:
        by_position.setdefault(record.after_height, []).append(record)

    try:
        for block in state.blocks:
            for record in by_position.get(block.height, ()):
                rebuilt = _replay_rejection(rebuilt, record)
            rebuilt = apply_block(rebuilt, block, directory)
        for record in by_position.get(state.height, ()):
            rebuilt = _replay_rejection(rebuilt, record)
    except ClaimstakeError:
        return False

    return canonical_encode(rebuilt) == canonical_encode(state)


def _replay_rejection(state: ChainState, record: RejectionRecord) -> ChainState:
    """Re-apply a recorded rejection. The original attestations are not part
    of the record, so this trusts the record's digest and slash target; the
    resulting bytes still have to match the verified state."""
    from .committee import mark_slashed

    if record.after_height != state.height:
        raise ChainError("rejection record out of sequence")
    store, index = state._materialized()
    return ChainState(
        store=store,
        height=state.height,
        templates=state.templates,
        stake=mark_slashed(state.stake, record.slashed),
        current_seed=digest(state.current_seed + record.rejected_digest),
        rejections=state.rejections + (record,),
        origin=state.origin,
        claim_index=index,
        claim_count=state._claim_count,
        tip_digest=state._tip_digest,
    )


def claim_status(
    state: ChainState, claimant: KeyFingerprint, template_id: str
) -> ClaimRecord | None:
    """Most recent accepted claim by this claimant on this template, if any.

    Returns only on-chain data; artifacts are never part of the state.
    """
    if template_id not in state.template_ids():
        raise TemplateError(f"unknown template {template_id!r}")
    for block in reversed(state.blocks):
        for entry in reversed(block.claims):
            claim = entry.claim
            if claim.claimant == claimant and claim.template_id == template_id:
                return ClaimRecord(
                    claim=claim,
                    package_digest=entry.package_digest,
                    height=block.height,
                )
    return None
