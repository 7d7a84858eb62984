"""Deterministic stake-proportional selection of the round committee.

Every node derives the same five-member committee (one validator, four
attestors) from the shared chain state alone: the round seed is a digest of
the current global seed and the round height, and selection consumes a
counter-mode digest stream expanded from that seed. Draws are sequential and
without replacement, each weighted by remaining stake, with rejection
sampling to keep the 64-bit uniforms unbiased. No platform RNG is involved,
so agreement is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import codec
from .chain import ChainState, StakeEntry, StakeLedger
from .codec import Reader, canonical_encode
from .envelope import KeyFingerprint, decode_fingerprint, digest
from .errors import ChainError, CommitteeError, LedgerError, PoolExhaustedError

COMMITTEE_SIZE = 5
ATTESTOR_COUNT = COMMITTEE_SIZE - 1

_U64_SPAN = 2**64


@dataclass(frozen=True, slots=True)
class SelectionSeed:
    """Per-round randomness: Digest(current_seed ‖ round height)."""

    seed: bytes
    height: int


@dataclass(frozen=True, slots=True)
class Committee:
    validator: KeyFingerprint
    attestors: tuple[KeyFingerprint, ...]
    round_height: int

    def __post_init__(self):
        if len(self.attestors) != ATTESTOR_COUNT:
            raise CommitteeError(f"committee needs {ATTESTOR_COUNT} attestors")
        members = (self.validator, *self.attestors)
        if len(set(members)) != COMMITTEE_SIZE:
            raise CommitteeError("committee members must be distinct")

    @property
    def members(self) -> tuple[KeyFingerprint, ...]:
        return (self.validator, *self.attestors)


@canonical_encode.register
def _(value: Committee) -> bytes:
    return (
        canonical_encode(value.validator)
        + codec.encode_list([canonical_encode(a) for a in value.attestors])
        + codec.encode_u64(value.round_height)
    )


def decode_committee(reader: Reader) -> Committee:
    return Committee(
        validator=decode_fingerprint(reader),
        attestors=tuple(reader.list_(decode_fingerprint)),
        round_height=reader.u64(),
    )


def derive_seed(state: ChainState, height: int) -> SelectionSeed:
    """Selection seed for the next round; pure function of shared state."""
    if height != state.height:
        raise ChainError(
            f"cannot derive seed for height {height}; next round is {state.height}"
        )
    return SelectionSeed(
        seed=digest(state.current_seed + codec.encode_u64(height)),
        height=height,
    )


class _DigestStream:
    """Counter-mode expansion of a seed digest into 64-bit uniforms."""

    __slots__ = ("_seed", "_counter", "_buffer", "_offset")

    def __init__(self, seed: bytes):
        self._seed = seed
        self._counter = 0
        self._buffer = b""
        self._offset = 0

    def next_u64(self) -> int:
        if self._offset >= len(self._buffer):
            self._buffer = digest(self._seed + codec.encode_u64(self._counter))
            self._counter += 1
            self._offset = 0
        value = int.from_bytes(self._buffer[self._offset : self._offset + 8], "big")
        self._offset += 8
        return value

    def uniform_below(self, bound: int) -> int:
        # Rejection sampling removes modulo bias.
        limit = _U64_SPAN - (_U64_SPAN % bound)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % bound


def select_committee(ledger: StakeLedger, seed: SelectionSeed) -> Committee:
    """Draw 1 validator + 4 attestors, stake-weighted, without replacement.

    At each draw an eligible entry's probability is its stake over the
    remaining eligible stake. The pool is ordered by fingerprint before
    drawing, so any two nodes with the same ledger and seed agree exactly.
    """
    pool = list(ledger.sorted_eligible)
    if len(pool) < COMMITTEE_SIZE:
        raise PoolExhaustedError(
            f"need {COMMITTEE_SIZE} eligible stakers, have {len(pool)}"
        )

    stream = _DigestStream(seed.seed)
    total = sum(stake for _, stake in pool)
    chosen: list[KeyFingerprint] = []
    for _ in range(COMMITTEE_SIZE):
        target = stream.uniform_below(total)
        cumulative = 0
        for index, (fingerprint, stake) in enumerate(pool):
            cumulative += stake
            if target < cumulative:
                chosen.append(fingerprint)
                total -= stake
                pool.pop(index)
                break

    return Committee(
        validator=chosen[0], attestors=tuple(chosen[1:]), round_height=seed.height
    )


def mark_slashed(ledger: StakeLedger, member: KeyFingerprint) -> StakeLedger:
    """Forfeit a member's stake and eligibility; all other entries untouched."""
    entry = ledger.entries.get(member)
    if entry is None:
        raise LedgerError(f"cannot slash unknown member {member.short()}")
    if not entry.eligible:
        raise LedgerError(f"member {member.short()} is not an eligible staker")

    entries = dict(ledger.entries)
    entries[member] = StakeEntry(stake=0, eligible=False)
    return StakeLedger(entries=entries)
