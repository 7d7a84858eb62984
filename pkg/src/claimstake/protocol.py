"""The two-stage verification round.

A round moves a batch of claims through: ticket (claim + artifacts, digest
committed) → stamp (artifacts sealed to the committee, claim signed) →
independent evaluation by all five committee members → the validator mints a
block with the claims it judged supported → the four attestors compare the
block against their own judgments → finalize (accept with at least two
concurring attestors, otherwise discard the block and slash the validator).

Judgment policies stand in for the human evaluator. The base policy hooks
also let simulations model colluding committee members: what a member reports
as a judgment, what a validator includes, and how an attestor votes are all
policy decisions; the chain-level rules in `finalize_round` are not.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .chain import (
    ATTESTOR_COUNT,
    CONCURRENCE_THRESHOLD,
    Attestation,
    Block,
    ChainState,
    Claim,
    ClaimEntry,
    apply_block,
    apply_rejection,
    attestation_message,
    block_core_digest,
    claim_signing_bytes,
    decode_block,
    expected_seed_commitment,
    mint_signing_bytes,
    unattested_digest,
)
from . import codec
from .codec import Reader, canonical_encode
from .committee import Committee, decode_committee, derive_seed, select_committee
from .envelope import (
    ArtifactBundle,
    DIGEST_LEN,
    Identity,
    KeyFingerprint,
    SealedBundle,
    decode_fingerprint,
    digest,
    open_envelope,
    seal_for_committee,
    sign,
    verify_signature,
)
from .errors import (
    ArtifactError,
    AuthorityError,
    ConsensusError,
    DirectoryError,
    SignatureError,
    TamperError,
    TemplateError,
)


@dataclass(frozen=True, slots=True)
class Ticket:
    """A claim bound to its supporting artifacts by one package digest."""

    claim: Claim
    bundle: ArtifactBundle
    package_digest: bytes


@dataclass(frozen=True, slots=True)
class StampedTicket:
    """A ticket ready for publication: the claim in plaintext, the artifacts
    sealed to the round committee, and the claimant's signature binding the
    claim to the package digest."""

    claim: Claim
    sealed: SealedBundle
    package_digest: bytes
    claimant_signature: bytes


@dataclass(frozen=True, slots=True)
class Judgment:
    """One committee member's signed verdict on one ticket."""

    member: KeyFingerprint
    ticket_digest: bytes
    verdict: bool
    signature: bytes


@dataclass(frozen=True, slots=True)
class RoundOutcome:
    """Everything one round produced. `block` is the minted block, carried
    even for rejected rounds (with its attestations attached) so the round is
    auditable and replayable. `false_accept` is a ground-truth flag only the
    simulation harness can set."""

    height: int
    committee: Committee
    accepted: bool
    block: Block | None
    judgments: tuple[Judgment, ...]
    slashed: KeyFingerprint | None
    false_accept: bool


@canonical_encode.register
def _(value: Ticket) -> bytes:
    return (
        codec.segment(canonical_encode(value.claim))
        + codec.segment(canonical_encode(value.bundle))
        + codec.encode_bytes(value.package_digest)
    )


@canonical_encode.register
def _(value: StampedTicket) -> bytes:
    return (
        codec.segment(canonical_encode(value.claim))
        + codec.segment(canonical_encode(value.sealed))
        + codec.encode_bytes(value.package_digest)
        + codec.encode_bytes(value.claimant_signature)
    )


@canonical_encode.register
def _(value: Judgment) -> bytes:
    return (
        canonical_encode(value.member)
        + codec.encode_bytes(value.ticket_digest)
        + codec.encode_bool(value.verdict)
        + codec.encode_bytes(value.signature)
    )


@canonical_encode.register
def _(value: RoundOutcome) -> bytes:
    return (
        codec.encode_u64(value.height)
        + codec.segment(canonical_encode(value.committee))
        + codec.encode_bool(value.accepted)
        + codec.encode_optional(
            None if value.block is None else canonical_encode(value.block)
        )
        + codec.encode_list([canonical_encode(j) for j in value.judgments])
        + codec.encode_optional(
            None if value.slashed is None else canonical_encode(value.slashed)
        )
        + codec.encode_bool(value.false_accept)
    )


def decode_judgment(reader: Reader) -> Judgment:
    return Judgment(
        member=decode_fingerprint(reader),
        ticket_digest=reader.bytes_(DIGEST_LEN),
        verdict=reader.bool_(),
        signature=reader.bytes_(),
    )


def decode_round_outcome(reader: Reader) -> RoundOutcome:
    return RoundOutcome(
        height=reader.u64(),
        committee=decode_committee(Reader(reader.segment())),
        accepted=reader.bool_(),
        block=reader.optional(decode_block),
        judgments=tuple(reader.list_(decode_judgment)),
        slashed=reader.optional(decode_fingerprint),
        false_accept=reader.bool_(),
    )


# ---------------------------------------------------------------------------
# Judgment policies
# ---------------------------------------------------------------------------

class JudgmentPolicy:
    """Decides whether artifacts support a claim; the programmatic stand-in
    for a human document reviewer. Must be deterministic per instance.

    The two hooks below default to faithful protocol behavior and exist so
    adversarial policies can deviate at exactly the points a real dishonest
    member could: which claims a validator includes, and how an attestor
    votes on a minted block.
    """

    def evaluate(self, claim: Claim, bundle: ArtifactBundle) -> bool:
        raise NotImplementedError

    def minting_verdict(
        self, claim: Claim, base_verdict: bool, committee: Committee
    ) -> bool:
        """Whether, as validator, to treat this claim as judged true."""
        return base_verdict

    def attestation_verdict(
        self, block: Block, own_judgments: Sequence[Judgment], committee: Committee
    ) -> bool:
        """Vote on a minted block; honest members demand an exact match with
        their own judgments."""
        return attestation_matches(block, own_judgments)


def attestation_matches(block: Block, own_judgments: Sequence[Judgment]) -> bool:
    """True iff the block's claim set equals the set this member judged true."""
    included = {entry.package_digest for entry in block.claims}
    approved = {j.ticket_digest for j in own_judgments if j.verdict}
    return included == approved


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Agent:
    identity: Identity
    policy: JudgmentPolicy


class AgentRegistry:
    """All participating agents, addressable by fingerprint, plus the shared
    public-key directory derived from them once."""

    def __init__(self, agents: Iterable[Agent]):
        self._agents: dict[KeyFingerprint, Agent] = {}
        for agent in agents:
            fp = agent.identity.fingerprint
            if fp in self._agents:
                raise DirectoryError(f"duplicate agent fingerprint {fp.short()}")
            self._agents[fp] = agent
        self.directory: dict[KeyFingerprint, bytes] = {
            fp: agent.identity.public_key for fp, agent in self._agents.items()
        }

    def agent(self, fingerprint: KeyFingerprint) -> Agent:
        agent = self._agents.get(fingerprint)
        if agent is None:
            raise DirectoryError(f"no agent registered for {fingerprint.short()}")
        return agent

    def __len__(self) -> int:
        return len(self._agents)

    def __iter__(self):
        return iter(self._agents.values())


@dataclass(frozen=True, slots=True)
class SubmittedTicket:
    """A ticket queued for the next round. `truthful` is ground truth known
    only to the harness; it never influences protocol behavior."""

    ticket: Ticket
    truthful: bool = True


# ---------------------------------------------------------------------------
# Round operations
# ---------------------------------------------------------------------------

def package_digest_of(claim: Claim, bundle: ArtifactBundle) -> bytes:
    return digest(canonical_encode(claim) + canonical_encode(bundle))


def ticket_claim(
    identity: Identity, claim: Claim, bundle: ArtifactBundle, state: ChainState
) -> Ticket:
    """Package a claim with its artifacts and commit to both via the digest."""
    if claim.claimant != identity.fingerprint:
        raise AuthorityError("claim names a different claimant")
    if claim.template_id not in state.template_ids():
        raise TemplateError(f"unknown template {claim.template_id!r}")
    if not bundle.artifacts:
        raise ArtifactError("a claim needs at least one supporting artifact")
    return Ticket(
        claim=claim, bundle=bundle, package_digest=package_digest_of(claim, bundle)
    )


def stamp_ticket(
    identity: Identity,
    ticket: Ticket,
    committee: Committee,
    directory: Mapping[KeyFingerprint, bytes],
    rng=os.urandom,
) -> StampedTicket:
    """Seal the artifacts to the round committee and sign the package.

    The claimant derives the committee itself from the shared state, so its
    recipient set agrees with every other node's.
    """
    if identity.fingerprint != ticket.claim.claimant:
        raise AuthorityError("only the claimant can stamp its ticket")
    try:
        committee_keys = [directory[m] for m in committee.members]
    except KeyError as exc:
        raise DirectoryError("missing public key for a committee member") from exc

    sealed = seal_for_committee(ticket.bundle, committee_keys, rng=rng)
    signature = sign(
        identity, claim_signing_bytes(ticket.claim, ticket.package_digest)
    )
    return StampedTicket(
        claim=ticket.claim,
        sealed=sealed,
        package_digest=ticket.package_digest,
        claimant_signature=signature,
    )


def judgment_message(ticket_digest: bytes, verdict: bool) -> bytes:
    return ticket_digest + (b"\x01" if verdict else b"\x00")


def make_judgment(identity: Identity, ticket_digest: bytes, verdict: bool) -> Judgment:
    return Judgment(
        member=identity.fingerprint,
        ticket_digest=ticket_digest,
        verdict=verdict,
        signature=sign(identity, judgment_message(ticket_digest, verdict)),
    )


def evaluate_ticket(
    member: Identity,
    policy: JudgmentPolicy,
    stamped: StampedTicket,
    directory: Mapping[KeyFingerprint, bytes],
) -> Judgment:
    """Open the envelope, check the ticket's integrity, and judge the claim.

    Structural failure (tampered envelope, digest mismatch, bad claimant
    signature) yields a false verdict regardless of the policy; only a
    non-recipient caller is an error.
    """
    verdict = False
    try:
        bundle = open_envelope(stamped.sealed, member)
    except TamperError:
        bundle = None
    if bundle is not None and package_digest_of(stamped.claim, bundle) == stamped.package_digest:
        claimant_key = directory.get(stamped.claim.claimant)
        if claimant_key is not None and verify_signature(
            claimant_key,
            claim_signing_bytes(stamped.claim, stamped.package_digest),
            stamped.claimant_signature,
        ):
            verdict = policy.evaluate(stamped.claim, bundle)
    return make_judgment(member, stamped.package_digest, verdict)


def mint_block(
    validator: Identity,
    state: ChainState,
    stamped_tickets: Sequence[StampedTicket],
    own_judgments: Sequence[Judgment],
    committee: Committee,
) -> Block:
    """Mint the round's block with exactly the claims judged true, carrying
    the claimant signatures through. The block is unattested; attestations
    are gathered before finalization."""
    if validator.fingerprint != committee.validator:
        raise AuthorityError("only the selected validator can mint")

    verdicts = {j.ticket_digest: j.verdict for j in own_judgments}
    claims = tuple(
        ClaimEntry(
            claim=st.claim,
            package_digest=st.package_digest,
            claimant_signature=st.claimant_signature,
        )
        for st in stamped_tickets
        if verdicts.get(st.package_digest, False)
    )

    height = committee.round_height
    parent = state.tip_digest()
    core = block_core_digest(height, parent, claims, validator.fingerprint)
    seed_commitment = expected_seed_commitment(state.current_seed, core)
    block = Block(
        height=height,
        parent_digest=parent,
        claims=claims,
        validator=validator.fingerprint,
        validator_signature=b"",
        attestations=(),
        seed_commitment=seed_commitment,
    )
    return replace(block, validator_signature=sign(validator, mint_signing_bytes(block)))


def sign_attestation(
    identity: Identity,
    block: Block,
    verdict: bool,
    block_unattested_digest: bytes | None = None,
) -> Attestation:
    if block_unattested_digest is None:
        block_unattested_digest = unattested_digest(block)
    return Attestation(
        member=identity.fingerprint,
        verdict=verdict,
        signature=sign(identity, attestation_message(block_unattested_digest, verdict)),
    )


def attest_block(
    attestor: Identity,
    block: Block,
    own_judgments: Sequence[Judgment],
    committee: Committee,
) -> Attestation:
    """Honest attestation: true iff the block matches the attestor's own
    judgments exactly, signed over the block digest and verdict."""
    if attestor.fingerprint not in committee.attestors:
        raise AuthorityError("only a selected attestor can attest")
    verdict = attestation_matches(block, own_judgments)
    return sign_attestation(attestor, block, verdict)


def finalize_round(
    state: ChainState,
    block: Block,
    attestations: Sequence[Attestation],
    committee: Committee,
    directory: Mapping[KeyFingerprint, bytes],
    judgments: Sequence[Judgment] = (),
) -> tuple[RoundOutcome, ChainState]:
    """Apply the concurrence rule and produce the round's outcome plus the
    successor state.

    Accepted (at least 2 of 4 concurring): the block joins the chain and
    stake is untouched. Rejected (at least 3 of 4 dissenting): the block is
    discarded, the validator is slashed, and the seed still advances over the
    rejected block's digest so the next committee differs.
    """
    if len(attestations) != ATTESTOR_COUNT:
        raise ConsensusError(
            f"round needs {ATTESTOR_COUNT} attestations, got {len(attestations)}"
        )
    by_member = {a.member: a for a in attestations}
    if set(by_member) != set(committee.attestors):
        raise ConsensusError("attestations must come from the selected attestors")

    block_unattested = unattested_digest(block)
    for attestation in attestations:
        member_key = directory.get(attestation.member)
        if member_key is None or not verify_signature(
            member_key,
            attestation_message(block_unattested, attestation.verdict),
            attestation.signature,
        ):
            raise ConsensusError("invalid attestation signature")

    ordered = tuple(by_member[m] for m in committee.attestors)
    final_block = replace(block, attestations=ordered)
    accepted = sum(1 for a in ordered if a.verdict) >= CONCURRENCE_THRESHOLD

    if accepted:
        new_state = apply_block(state, final_block, directory)
        slashed = None
    else:
        new_state = apply_rejection(state, final_block, directory)
        slashed = block.validator

    outcome = RoundOutcome(
        height=block.height,
        committee=committee,
        accepted=accepted,
        block=final_block,
        judgments=tuple(judgments),
        slashed=slashed,
        false_accept=False,
    )
    return outcome, new_state


def run_round(
    state: ChainState,
    registry: AgentRegistry,
    submitted: Sequence[SubmittedTicket],
    rng=os.urandom,
) -> tuple[RoundOutcome, ChainState]:
    """Execute one full round: derive the committee, stamp the submitted
    tickets, collect all five members' judgments, mint, attest, finalize.

    Deterministic given the state, agents, tickets, and `rng`.
    """
    seed = derive_seed(state, state.height)
    committee = select_committee(state.stake, seed)
    directory = registry.directory

    stampeds = []
    for sub in submitted:
        claimant = registry.agent(sub.ticket.claim.claimant)
        stampeds.append(
            stamp_ticket(claimant.identity, sub.ticket, committee, directory, rng=rng)
        )

    validator_agent = registry.agent(committee.validator)
    validator_judgments = []
    for st in stampeds:
        judgment = evaluate_ticket(
            validator_agent.identity, validator_agent.policy, st, directory
        )
        final_verdict = validator_agent.policy.minting_verdict(
            st.claim, judgment.verdict, committee
        )
        if final_verdict != judgment.verdict:
            judgment = make_judgment(
                validator_agent.identity, st.package_digest, final_verdict
            )
        validator_judgments.append(judgment)

    block = mint_block(
        validator_agent.identity, state, stampeds, validator_judgments, committee
    )

    all_judgments = list(validator_judgments)
    attestations = []
    block_unattested = unattested_digest(block)
    for fp in committee.attestors:
        agent = registry.agent(fp)
        own = [
            evaluate_ticket(agent.identity, agent.policy, st, directory)
            for st in stampeds
        ]
        all_judgments.extend(own)
        verdict = agent.policy.attestation_verdict(block, own, committee)
        attestations.append(
            sign_attestation(agent.identity, block, verdict, block_unattested)
        )

    outcome, new_state = finalize_round(
        state, block, attestations, committee, directory, judgments=all_judgments
    )

    bogus_digests = {
        sub.ticket.package_digest for sub in submitted if not sub.truthful
    }
    if outcome.accepted and bogus_digests and outcome.block is not None:
        if any(e.package_digest in bogus_digests for e in outcome.block.claims):
            outcome = replace(outcome, false_accept=True)
    return outcome, new_state
