"""Shared fixtures: deterministic identities and small honest networks."""

from __future__ import annotations

import pytest

from claimstake import codec
from claimstake.chain import (
    ClaimTemplate,
    GenesisConfig,
    GenesisStaker,
    genesis_state,
)
from claimstake.envelope import ArtifactBundle, digest, generate_identity
from claimstake.protocol import (
    Agent,
    AgentRegistry,
    Claim,
    SubmittedTicket,
    ticket_claim,
)
from claimstake.simulation import (
    TEMPLATE_CRITERIA,
    TEMPLATE_ID,
    HonestPolicy,
    make_byte_stream,
    supporting_payload,
)


def identity_seq(label: bytes, count: int):
    """Deterministic identities, distinct per label and index."""
    return [
        generate_identity(digest(label + codec.encode_u64(i))) for i in range(count)
    ]


class HonestNet:
    """A small all-honest network: stakers, claimants, genesis state."""

    def __init__(self, stakers: int, claimants: int, label: bytes = b"net", stake: int = 10):
        self.stakers = identity_seq(label + b"/stakers", stakers)
        self.claimants = identity_seq(label + b"/claimants", claimants)
        self.stake = stake
        policy = HonestPolicy()
        self.registry = AgentRegistry(
            [Agent(i, policy) for i in self.stakers + self.claimants]
        )
        self.genesis = GenesisConfig(
            identities=tuple(
                GenesisStaker(public_key=i.public_key, stake=stake) for i in self.stakers
            )
            + tuple(
                GenesisStaker(public_key=i.public_key, stake=0) for i in self.claimants
            ),
            templates=(ClaimTemplate(TEMPLATE_ID, TEMPLATE_CRITERIA),),
            genesis_seed=digest(label + b"/genesis"),
            min_stake=stake,
        )
        self.state = genesis_state(self.genesis)
        self.directory = self.registry.directory
        self.seal_rng = make_byte_stream(digest(label + b"/seal"))

    def valid_ticket(self, claimant_index: int = 0, nonce: int = 0, tag: str = "A"):
        identity = (self.claimants or self.stakers)[claimant_index]
        value = f"PCR-NEGATIVE-{tag}"
        claim = Claim(
            template_id=TEMPLATE_ID,
            claimant=identity.fingerprint,
            nonce=nonce,
            asserted_value=value,
        )
        bundle = ArtifactBundle.from_payloads(
            [("lab-report.txt", supporting_payload(value))]
        )
        return SubmittedTicket(ticket_claim(identity, claim, bundle, self.state))

    def bogus_ticket(self, sponsor_identity, nonce: int = 0xFFFF, tag: str = "B"):
        claim = Claim(
            template_id=TEMPLATE_ID,
            claimant=sponsor_identity.fingerprint,
            nonce=nonce,
            asserted_value=f"PCR-NEGATIVE-{tag}",
        )
        bundle = ArtifactBundle.from_payloads(
            [("lab-report.txt", b"SELF ASSESSMENT: everything is fine")]
        )
        return SubmittedTicket(
            ticket_claim(sponsor_identity, claim, bundle, self.state), truthful=False
        )


@pytest.fixture
def net():
    return HonestNet(stakers=7, claimants=3)


@pytest.fixture(scope="session")
def committee_identities():
    return identity_seq(b"committee-five", 5)
