"""Round mechanics: ticketing, stamping, evaluation, minting, attestation,
finalization, and the exhaustive honest/malicious safety boundary."""

import dataclasses
import itertools

import pytest

from claimstake.chain import genesis_state
from claimstake.codec import canonical_encode
from claimstake.committee import derive_seed, select_committee
from claimstake.envelope import (
    ArtifactBundle,
    digest,
    generate_identity,
    open_envelope,
)
from claimstake.errors import (
    AccessError,
    ArtifactError,
    AuthorityError,
    ConsensusError,
    DirectoryError,
    PoolExhaustedError,
    TemplateError,
)
from claimstake.protocol import (
    Agent,
    AgentRegistry,
    Claim,
    SubmittedTicket,
    attest_block,
    evaluate_ticket,
    finalize_round,
    mint_block,
    run_round,
    sign_attestation,
    stamp_ticket,
    ticket_claim,
)
from claimstake.simulation import (
    TEMPLATE_ID,
    CollusionPolicy,
    HonestPolicy,
    supporting_payload,
)

from conftest import HonestNet, identity_seq


@pytest.fixture
def round_ctx(net):
    seed = derive_seed(net.state, 0)
    committee = select_committee(net.state.stake, seed)
    return net, committee


def test_ticket_digest_recomputes(net):
    sub = net.valid_ticket()
    ticket = sub.ticket
    recomputed = digest(
        canonical_encode(ticket.claim) + canonical_encode(ticket.bundle)
    )
    assert ticket.package_digest == recomputed


def test_ticket_requires_known_template(net):
    identity = net.claimants[0]
    claim = Claim("flu-xyz", identity.fingerprint, 0, "X")
    bundle = ArtifactBundle.from_payloads([("a", b"b")])
    with pytest.raises(TemplateError):
        ticket_claim(identity, claim, bundle, net.state)


def test_ticket_requires_artifacts(net):
    identity = net.claimants[0]
    claim = Claim(TEMPLATE_ID, identity.fingerprint, 0, "X")
    with pytest.raises(ArtifactError):
        ticket_claim(identity, claim, ArtifactBundle(artifacts=()), net.state)


def test_ticket_tamper_breaks_digest(net):
    sub = net.valid_ticket()
    swapped = dataclasses.replace(
        sub.ticket,
        bundle=ArtifactBundle.from_payloads([("lab-report.txt", b"mutated")]),
    )
    recomputed = digest(
        canonical_encode(swapped.claim) + canonical_encode(swapped.bundle)
    )
    assert recomputed != swapped.package_digest


def test_stamp_seals_to_committee_and_validator_opens(round_ctx):
    net, committee = round_ctx
    sub = net.valid_ticket()
    identity = net.claimants[0]
    stamped = stamp_ticket(identity, sub.ticket, committee, net.directory)
    assert stamped.sealed.recipients == committee.members
    validator = net.registry.agent(committee.validator).identity
    assert open_envelope(stamped.sealed, validator) == sub.ticket.bundle


def test_stamp_missing_directory_key_errors(round_ctx):
    net, committee = round_ctx
    sub = net.valid_ticket()
    thin_directory = dict(net.directory)
    del thin_directory[committee.validator]
    with pytest.raises(DirectoryError):
        stamp_ticket(net.claimants[0], sub.ticket, committee, thin_directory)


def test_non_committee_member_cannot_evaluate(round_ctx):
    net, committee = round_ctx
    sub = net.valid_ticket()
    stamped = stamp_ticket(net.claimants[0], sub.ticket, committee, net.directory)
    outsider = generate_identity(b"outsider-eval")
    with pytest.raises(AccessError):
        evaluate_ticket(outsider, HonestPolicy(), stamped, net.directory)


def test_honest_evaluation_verdicts(round_ctx):
    net, committee = round_ctx
    valid = stamp_ticket(
        net.claimants[0], net.valid_ticket().ticket, committee, net.directory
    )
    bogus_sub = net.bogus_ticket(net.claimants[1])
    bogus = stamp_ticket(net.claimants[1], bogus_sub.ticket, committee, net.directory)
    validator = net.registry.agent(committee.validator).identity
    assert evaluate_ticket(validator, HonestPolicy(), valid, net.directory).verdict
    assert not evaluate_ticket(validator, HonestPolicy(), bogus, net.directory).verdict


def test_tampered_ciphertext_yields_false_verdict(round_ctx):
    net, committee = round_ctx
    stamped = stamp_ticket(
        net.claimants[0], net.valid_ticket().ticket, committee, net.directory
    )
    corrupt = bytearray(stamped.sealed.ciphertext)
    corrupt[0] ^= 1
    tampered = dataclasses.replace(
        stamped,
        sealed=dataclasses.replace(stamped.sealed, ciphertext=bytes(corrupt)),
    )
    validator = net.registry.agent(committee.validator).identity
    judgment = evaluate_ticket(validator, HonestPolicy(), tampered, net.directory)
    assert judgment.verdict is False


def test_mint_filters_by_judgment(round_ctx):
    net, committee = round_ctx
    subs = [net.valid_ticket(0, 0, "a"), net.bogus_ticket(net.claimants[1], 1, "b"),
            net.valid_ticket(2, 2, "c")]
    stamped = [
        stamp_ticket(net.registry.agent(s.ticket.claim.claimant).identity,
                     s.ticket, committee, net.directory)
        for s in subs
    ]
    validator = net.registry.agent(committee.validator).identity
    judgments = [
        evaluate_ticket(validator, HonestPolicy(), st, net.directory) for st in stamped
    ]
    assert [j.verdict for j in judgments] == [True, False, True]
    block = mint_block(validator, net.state, stamped, judgments, committee)
    assert len(block.claims) == 2
    assert {e.package_digest for e in block.claims} == {
        stamped[0].package_digest,
        stamped[2].package_digest,
    }


def test_empty_block_still_minted(round_ctx):
    net, committee = round_ctx
    validator = net.registry.agent(committee.validator).identity
    block = mint_block(validator, net.state, [], [], committee)
    attestations = [
        attest_block(net.registry.agent(fp).identity, block, [], committee)
        for fp in committee.attestors
    ]
    outcome, state = finalize_round(
        net.state, block, attestations, committee, net.directory
    )
    assert outcome.accepted
    assert state.height == 1
    assert state.current_seed != net.state.current_seed


def test_only_validator_mints_and_only_attestors_attest(round_ctx):
    net, committee = round_ctx
    attestor = net.registry.agent(committee.attestors[0]).identity
    validator = net.registry.agent(committee.validator).identity
    with pytest.raises(AuthorityError):
        mint_block(attestor, net.state, [], [], committee)
    block = mint_block(validator, net.state, [], [], committee)
    with pytest.raises(AuthorityError):
        attest_block(validator, block, [], committee)


def test_attestor_mismatch_cases(round_ctx):
    net, committee = round_ctx
    sub = net.valid_ticket()
    stamped = stamp_ticket(net.claimants[0], sub.ticket, committee, net.directory)
    validator = net.registry.agent(committee.validator).identity
    attestor = net.registry.agent(committee.attestors[0]).identity
    v_judgment = evaluate_ticket(validator, HonestPolicy(), stamped, net.directory)
    a_judgment = evaluate_ticket(attestor, HonestPolicy(), stamped, net.directory)

    block_with = mint_block(validator, net.state, [stamped], [v_judgment], committee)
    # matching judgments -> true
    assert attest_block(attestor, block_with, [a_judgment], committee).verdict
    # block omits a claim the attestor judged true -> false
    block_without = mint_block(validator, net.state, [stamped], [], committee)
    assert not attest_block(attestor, block_without, [a_judgment], committee).verdict
    # block includes a claim the attestor judged false -> false
    dissent = dataclasses.replace(a_judgment, verdict=False)
    assert not attest_block(attestor, block_with, [dissent], committee).verdict


def test_concurrence_rule_all_sixteen_verdict_vectors(round_ctx):
    # oracle: the acceptance set is exactly the vectors with >= 2 true votes
    net, committee = round_ctx
    validator = net.registry.agent(committee.validator).identity
    block = mint_block(validator, net.state, [], [], committee)
    for verdicts in itertools.product([False, True], repeat=4):
        attestations = [
            sign_attestation(net.registry.agent(fp).identity, block, verdict)
            for fp, verdict in zip(committee.attestors, verdicts)
        ]
        outcome, state = finalize_round(
            net.state, block, attestations, committee, net.directory
        )
        should_accept = sum(verdicts) >= 2
        assert outcome.accepted == should_accept
        if should_accept:
            assert outcome.slashed is None
            assert state.height == 1
            assert state.stake.total_stake() == net.state.stake.total_stake()
        else:
            assert outcome.slashed == committee.validator
            assert state.height == 0
            assert not state.stake.entries[committee.validator].eligible
            assert state.current_seed != net.state.current_seed
            assert len(state.rejections) == 1


def test_finalize_rejects_wrong_attestor_set(round_ctx):
    net, committee = round_ctx
    validator = net.registry.agent(committee.validator).identity
    block = mint_block(validator, net.state, [], [], committee)
    imposter = generate_identity(b"imposter")
    attestations = [
        sign_attestation(net.registry.agent(fp).identity, block, True)
        for fp in committee.attestors[:3]
    ] + [sign_attestation(imposter, block, True)]
    with pytest.raises(ConsensusError):
        finalize_round(net.state, block, attestations, committee, net.directory)


def test_finalize_rejects_bad_attestation_signature(round_ctx):
    net, committee = round_ctx
    validator = net.registry.agent(committee.validator).identity
    block = mint_block(validator, net.state, [], [], committee)
    attestations = [
        sign_attestation(net.registry.agent(fp).identity, block, True)
        for fp in committee.attestors
    ]
    # flip one verdict without re-signing
    attestations[0] = dataclasses.replace(attestations[0], verdict=False)
    with pytest.raises(ConsensusError):
        finalize_round(net.state, block, attestations, committee, net.directory)


def test_run_round_accepts_honest_ticket(net):
    outcome, state = run_round(net.state, net.registry, [net.valid_ticket()], rng=net.seal_rng)
    assert outcome.accepted
    assert len(outcome.block.claims) == 1
    assert outcome.false_accept is False
    assert len(outcome.judgments) == 5


def test_run_round_deterministic(net):
    first, _ = run_round(net.state, net.registry, [net.valid_ticket()], rng=net.seal_rng)
    second, _ = run_round(net.state, net.registry, [net.valid_ticket()], rng=net.seal_rng)
    assert canonical_encode(first) == canonical_encode(second)


def test_run_round_pool_exhausted():
    small = HonestNet(stakers=4, claimants=1, label=b"tiny")
    with pytest.raises(PoolExhaustedError):
        run_round(small.state, small.registry, [small.valid_ticket()], rng=small.seal_rng)


# ---------------------------------------------------------------------------
# Exhaustive safety boundary over all committee labelings
# ---------------------------------------------------------------------------

def committee_labeling_round(malicious: tuple[bool, ...], push_unsafe: bool):
    """Run one round with exactly five stakers whose honesty is assigned per
    committee seat, a colluder-sponsored bogus ticket, and punitive attestors.

    Returns (outcome, committee, labels-by-seat).
    """
    stakers = identity_seq(b"labeling-stakers", 5)
    sponsor = identity_seq(b"labeling-sponsor", 1)[0]

    from claimstake.chain import ClaimTemplate, GenesisConfig, GenesisStaker
    from claimstake.simulation import TEMPLATE_CRITERIA, make_byte_stream

    genesis = GenesisConfig(
        identities=tuple(
            GenesisStaker(public_key=i.public_key, stake=10) for i in stakers
        )
        + (GenesisStaker(public_key=sponsor.public_key, stake=0),),
        templates=(ClaimTemplate(TEMPLATE_ID, TEMPLATE_CRITERIA),),
        genesis_seed=digest(b"labeling-genesis"),
        min_stake=10,
    )
    state = genesis_state(genesis)
    committee = select_committee(state.stake, derive_seed(state, 0))

    seat_of = {member: i for i, member in enumerate(committee.members)}
    colluders = frozenset(
        [sponsor.fingerprint]
        + [member for member, seat in seat_of.items() if malicious[seat]]
    )
    collusion = CollusionPolicy(
        colluders=colluders, push_unsafe=push_unsafe, punish_honest_blocks=True
    )
    honest = HonestPolicy()
    agents = [
        Agent(identity, collusion if malicious[seat_of[identity.fingerprint]] else honest)
        for identity in stakers
    ] + [Agent(sponsor, collusion)]
    registry = AgentRegistry(agents)

    claim = Claim(TEMPLATE_ID, sponsor.fingerprint, 1, "PCR-NEGATIVE-FAKE")
    bundle = ArtifactBundle.from_payloads([("report", b"no supporting evidence")])
    bogus = SubmittedTicket(ticket_claim(sponsor, claim, bundle, state), truthful=False)

    seal_rng = make_byte_stream(digest(b"labeling-seal"))
    outcome, _ = run_round(state, registry, [bogus], rng=seal_rng)
    return outcome, committee


@pytest.mark.parametrize("push_unsafe", [False, True])
def test_safety_boundary_all_32_labelings(push_unsafe):
    for malicious in itertools.product([False, True], repeat=5):
        outcome, committee = committee_labeling_round(malicious, push_unsafe)
        total_malicious = sum(malicious)
        validator_malicious = malicious[0]
        malicious_attestors = sum(malicious[1:])

        bogus_accepted = outcome.accepted and len(outcome.block.claims) > 0
        honest_validator_slashed = (
            outcome.slashed is not None and not validator_malicious
        )
        wrong_outcome = bogus_accepted or honest_validator_slashed

        if push_unsafe:
            assert bogus_accepted == (validator_malicious and malicious_attestors >= 2)
            # a pushing validator without cover is slashed with certainty
            if validator_malicious and malicious_attestors <= 1:
                assert outcome.slashed == committee.validator
        else:
            assert bogus_accepted == (validator_malicious and malicious_attestors >= 2)

        assert wrong_outcome == (total_malicious >= 3), (malicious, push_unsafe)

        if total_malicious == 0:
            assert outcome.accepted and outcome.slashed is None
