"""Deterministic multi-agent scenario runner.

Spawns a population of identities, designates part of it as the staking pool
and part of the pool as colluding disturbance agents, then drives the full
protocol round after round. Because committees are re-drawn each round from
the eligible pool, the number of colluders seated per round is hypergeometric,
and the run makes the committee-compromise probability empirically observable:
a round is *disturbed* exactly when colluders hold three or more of the five
seats, which lets them either push a bogus claim into an accepted block (when
one of them is the validator) or overrule the honest validator (when they hold
an attestor majority).

Everything is reproducible from the scenario seed: identities, colluder
designation, claimant rotation, and envelope randomness are all derived from
it deterministically.

Colluder behavior defaults to patience: a colluding validator only includes
the bogus claim when at least two colluding attestors guarantee acceptance,
and colluding attestors approve honest blocks rather than burn the committee's
validator. This keeps the pool composition constant over arbitrarily long
runs, so observed disturbance frequency estimates the fixed-pool compromise
probability. The aggressive variants (`push_unsafe`, `punish_honest_blocks`)
realize the slashing consequences instead, at the cost of draining the pool.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import codec
from .chain import (
    ChainState,
    Claim,
    ClaimTemplate,
    GenesisConfig,
    GenesisStaker,
    genesis_state,
)
from .envelope import (
    ArtifactBundle,
    Identity,
    KeyFingerprint,
    digest,
    generate_identity,
)
from .errors import ArtifactError, ConfigError, PoolExhaustedError
from .protocol import (
    Agent,
    AgentRegistry,
    JudgmentPolicy,
    RoundOutcome,
    SubmittedTicket,
    run_round,
    ticket_claim,
)

TEMPLATE_ID = "pcr-negative"
TEMPLATE_CRITERIA = (
    "A lab report artifact must state the asserted test result verbatim "
    "('LAB-REPORT CONFIRMS <asserted value>')."
)
SUPPORT_PREFIX = b"LAB-REPORT CONFIRMS "


def supporting_payload(asserted_value: str) -> bytes:
    """The artifact content an honest evaluator accepts for this assertion."""
    return SUPPORT_PREFIX + asserted_value.encode("utf-8")


def bundle_supports(claim: Claim, bundle: ArtifactBundle) -> bool:
    expected = supporting_payload(claim.asserted_value)
    try:
        return any(artifact.payload() == expected for artifact in bundle.artifacts)
    except ArtifactError:
        return False


class HonestPolicy(JudgmentPolicy):
    """Judges a claim true exactly when an artifact matches its assertion."""

    def evaluate(self, claim, bundle) -> bool:
        return bundle_supports(claim, bundle)


@dataclass(frozen=True)
class CollusionPolicy(JudgmentPolicy):
    """A disturbance agent: judges colluder-sponsored claims true, votes to
    accept any block that carries one, and otherwise blends in.

    `push_unsafe` makes a colluding validator include the bogus claim even
    without two colluding attestors to protect it (it will be slashed).
    `punish_honest_blocks` makes colluding attestors vote false on blocks
    without a colluder claim, which slashes the honest validator whenever
    they hold three attestor seats.
    """

    colluders: frozenset[KeyFingerprint]
    push_unsafe: bool = False
    punish_honest_blocks: bool = False

    def evaluate(self, claim, bundle) -> bool:
        if claim.claimant in self.colluders:
            return True
        return bundle_supports(claim, bundle)

    def minting_verdict(self, claim, base_verdict, committee) -> bool:
        if not base_verdict:
            return False
        if claim.claimant in self.colluders and not self.push_unsafe:
            cover = sum(1 for a in committee.attestors if a in self.colluders)
            return cover >= 2
        return True

    def attestation_verdict(self, block, own_judgments, committee) -> bool:
        if any(entry.claim.claimant in self.colluders for entry in block.claims):
            return True
        return not self.punish_honest_blocks


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one simulation run.

    `population` identities are created; `floor(pool_ratio * population)` of
    them stake and form the eligible pool; `floor(disturbance_ratio * pool)`
    of the pool collude. The remainder of the population are non-staking
    claimants.
    """

    population: int
    pool_ratio: float
    disturbance_ratio: float
    rounds: int
    tickets_per_round: int
    rng_seed: int
    stake_per_validator: int
    push_unsafe: bool = False
    punish_honest_blocks: bool = False
    record_rounds: bool = True

    def __post_init__(self):
        if self.population < 1:
            raise ConfigError("population must be positive")
        if not 0 < self.pool_ratio <= 1:
            raise ConfigError("pool_ratio must be in (0, 1]")
        if not 0 <= self.disturbance_ratio <= 1:
            raise ConfigError("disturbance_ratio must be in [0, 1]")
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if self.tickets_per_round < 0:
            raise ConfigError("tickets_per_round must be non-negative")
        if self.stake_per_validator < 1:
            raise ConfigError("stake_per_validator must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits")
        if self.pool_size < 5:
            raise ConfigError(
                f"pool of {self.pool_size} cannot seat a committee of 5; "
                "increase population or pool_ratio"
            )

    @property
    def pool_size(self) -> int:
        return int(self.pool_ratio * self.population)

    @property
    def colluder_count(self) -> int:
        return int(self.disturbance_ratio * self.pool_size)


@dataclass(frozen=True)
class ScenarioAgents:
    """The spawned population: the registry plus the designation of who
    stakes, who colludes, and who merely claims."""

    registry: AgentRegistry
    stakers: tuple[KeyFingerprint, ...]
    colluders: frozenset[KeyFingerprint]
    claimants: tuple[KeyFingerprint, ...]
    genesis: GenesisConfig

    def honest_claimant_pool(self) -> tuple[KeyFingerprint, ...]:
        """Who sponsors truthful tickets: the non-staking population when it
        exists, otherwise the honest stakers. Colluders only ever sponsor
        the attack ticket."""
        if self.claimants:
            return self.claimants
        return tuple(fp for fp in self.stakers if fp not in self.colluders)


@dataclass(frozen=True)
class SimulationReport:
    """Aggregates of one run.

    `false_accepts` counts rounds whose accepted block carries a
    ground-truth-bogus claim (requires a colluding validator with two
    colluding attestors). `honest_rejections` counts rounds in which
    colluders held three or more attestor seats against an honest validator;
    with punitive attestation enabled those rounds reject the block and
    slash the validator, and with the default patient adversary they are
    counted as compromised committees without being acted on. Their sum over
    `rounds_run` is the observed disturbance rate `empirical_p_d`.
    """

    rounds_run: int
    false_accepts: int
    honest_rejections: int
    slash_events: int
    empirical_p_d: float
    per_round: tuple[RoundOutcome, ...]
    colluders: frozenset[KeyFingerprint]
    early_terminated: bool
    final_state: ChainState = field(compare=False)


@dataclass(frozen=True)
class MetricsTable:
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]


def _identity_for(rng_seed: int, index: int) -> Identity:
    return generate_identity(
        digest(b"scenario agent" + codec.encode_u64(rng_seed) + codec.encode_u64(index))
    )


def make_byte_stream(seed: bytes):
    """Deterministic os.urandom stand-in: counter-mode digest expansion."""
    state = {"counter": 0, "buffer": b""}

    def read(n: int) -> bytes:
        while len(state["buffer"]) < n:
            state["buffer"] += digest(seed + codec.encode_u64(state["counter"]))
            state["counter"] += 1
        out, state["buffer"] = state["buffer"][:n], state["buffer"][n:]
        return out

    return read


def spawn_agents(config: ScenarioConfig) -> ScenarioAgents:
    """Create the population, designate stakers and colluders, and build the
    genesis configuration that registers everyone's public key."""
    identities = [
        _identity_for(config.rng_seed, i) for i in range(config.population)
    ]
    pool = identities[: config.pool_size]
    rest = identities[config.pool_size :]

    rng = random.Random(config.rng_seed)
    colluder_indices = sorted(rng.sample(range(len(pool)), config.colluder_count))
    colluders = frozenset(pool[i].fingerprint for i in colluder_indices)

    agents = []
    honest = HonestPolicy()
    collusion = CollusionPolicy(
        colluders=colluders,
        push_unsafe=config.push_unsafe,
        punish_honest_blocks=config.punish_honest_blocks,
    )
    for identity in identities:
        policy = collusion if identity.fingerprint in colluders else honest
        agents.append(Agent(identity=identity, policy=policy))

    genesis = GenesisConfig(
        identities=tuple(
            GenesisStaker(
                public_key=identity.public_key,
                stake=config.stake_per_validator if i < config.pool_size else 0,
            )
            for i, identity in enumerate(identities)
        ),
        templates=(ClaimTemplate(TEMPLATE_ID, TEMPLATE_CRITERIA),),
        genesis_seed=digest(b"scenario genesis" + codec.encode_u64(config.rng_seed)),
        min_stake=config.stake_per_validator,
    )
    return ScenarioAgents(
        registry=AgentRegistry(agents),
        stakers=tuple(i.fingerprint for i in pool),
        colluders=colluders,
        claimants=tuple(i.fingerprint for i in rest),
        genesis=genesis,
    )


def _round_tickets(
    config: ScenarioConfig,
    agents: ScenarioAgents,
    state: ChainState,
    round_index: int,
    rng: random.Random,
) -> list[SubmittedTicket]:
    tickets = []
    claimant_pool = agents.honest_claimant_pool()
    for i in range(config.tickets_per_round if claimant_pool else 0):
        claimant_fp = claimant_pool[rng.randrange(len(claimant_pool))]
        identity = agents.registry.agent(claimant_fp).identity
        value = f"PCR-NEGATIVE-R{round_index}-{i}"
        claim = Claim(
            template_id=TEMPLATE_ID,
            claimant=claimant_fp,
            nonce=(round_index << 16) | i,
            asserted_value=value,
        )
        bundle = ArtifactBundle.from_payloads(
            [("lab-report.txt", supporting_payload(value))]
        )
        tickets.append(SubmittedTicket(ticket_claim(identity, claim, bundle, state)))

    if agents.colluders:
        sponsors = sorted(agents.colluders)
        sponsor_fp = sponsors[rng.randrange(len(sponsors))]
        identity = agents.registry.agent(sponsor_fp).identity
        claim = Claim(
            template_id=TEMPLATE_ID,
            claimant=sponsor_fp,
            nonce=(round_index << 16) | 0xFFFF,
            asserted_value=f"PCR-NEGATIVE-R{round_index}-BOGUS",
        )
        bundle = ArtifactBundle.from_payloads(
            [("lab-report.txt", b"SELF ASSESSMENT: feeling perfectly fine")]
        )
        tickets.append(
            SubmittedTicket(ticket_claim(identity, claim, bundle, state), truthful=False)
        )
    return tickets


def run_scenario(config: ScenarioConfig) -> SimulationReport:
    """Run the configured number of protocol rounds and tally outcomes.

    Pool exhaustion (too few eligible stakers left to seat a committee) ends
    the run early and is reported, not raised.
    """
    agents = spawn_agents(config)
    state = genesis_state(agents.genesis)
    rng = random.Random(config.rng_seed ^ 0x5EED)
    seal_rng = make_byte_stream(
        digest(b"scenario sealing" + codec.encode_u64(config.rng_seed))
    )

    colluders = agents.colluders
    per_round: list[RoundOutcome] = []
    false_accepts = 0
    honest_rejections = 0
    slash_events = 0
    rounds_run = 0
    early = False

    for round_index in range(config.rounds):
        tickets = _round_tickets(config, agents, state, round_index, rng)
        try:
            outcome, state = run_round(state, agents.registry, tickets, rng=seal_rng)
        except PoolExhaustedError:
            early = True
            break
        rounds_run += 1

        if outcome.false_accept:
            false_accepts += 1
        committee = outcome.committee
        if committee.validator not in colluders:
            colluding_attestors = sum(1 for a in committee.attestors if a in colluders)
            if colluding_attestors >= 3:
                honest_rejections += 1
        if outcome.slashed is not None:
            slash_events += 1
        if config.record_rounds:
            per_round.append(outcome)

    empirical = (false_accepts + honest_rejections) / rounds_run if rounds_run else 0.0
    return SimulationReport(
        rounds_run=rounds_run,
        false_accepts=false_accepts,
        honest_rejections=honest_rejections,
        slash_events=slash_events,
        empirical_p_d=empirical,
        per_round=tuple(per_round),
        colluders=colluders,
        early_terminated=early,
        final_state=state,
    )


METRICS_HEADER = (
    "kind",
    "round",
    "malicious_seats",
    "accepted",
    "false_accept",
    "honest_overrule",
    "slashed",
    "empirical_p_d",
)


def collect_metrics(report: SimulationReport) -> MetricsTable:
    """Per-round rows plus one aggregate row, ready for CSV emission.

    The aggregate `empirical_p_d` equals the fraction of per-round rows with
    `false_accept` or `honest_overrule` set.
    """
    rows = []
    for index, outcome in enumerate(report.per_round):
        committee = outcome.committee
        seats = sum(1 for m in committee.members if m in report.colluders)
        overrule = (
            committee.validator not in report.colluders
            and sum(1 for a in committee.attestors if a in report.colluders) >= 3
        )
        rows.append(
            (
                "round",
                str(index),
                str(seats),
                str(outcome.accepted).lower(),
                str(outcome.false_accept).lower(),
                str(overrule).lower(),
                outcome.slashed.hex() if outcome.slashed is not None else "",
                "",
            )
        )
    rows.append(
        (
            "aggregate",
            str(report.rounds_run),
            "",
            "",
            "",
            "",
            "",
            repr(report.empirical_p_d),
        )
    )
    return MetricsTable(header=METRICS_HEADER, rows=tuple(rows))
