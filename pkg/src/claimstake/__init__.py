"""claimstake: stake-weighted committee verification of claims on an
append-only ledger, with a deterministic simulation harness and an exact
committee-compromise risk model."""

from .chain import (
    Attestation,
    Block,
    ChainState,
    Claim,
    ClaimRecord,
    ClaimTemplate,
    GenesisConfig,
    GenesisStaker,
    StakeEntry,
    StakeLedger,
    apply_block,
    apply_rejection,
    block_digest,
    claim_status,
    genesis_state,
    key_directory,
    verify_block,
    verify_chain,
)
from .codec import canonical_encode
from .committee import Committee, SelectionSeed, derive_seed, mark_slashed, select_committee
from .envelope import (
    Artifact,
    ArtifactBundle,
    Identity,
    KeyFingerprint,
    SealedBundle,
    digest,
    generate_identity,
    open_envelope,
    seal_for_committee,
    sign,
    verify_signature,
)
from .errors import ClaimstakeError
from .protocol import (
    Agent,
    AgentRegistry,
    Judgment,
    JudgmentPolicy,
    RoundOutcome,
    StampedTicket,
    SubmittedTicket,
    Ticket,
    attest_block,
    evaluate_ticket,
    finalize_round,
    mint_block,
    run_round,
    stamp_ticket,
    ticket_claim,
)
from .risk import (
    RiskParams,
    RiskResult,
    min_population_for_risk,
    p_disturb_analytic,
    p_disturb_montecarlo,
    required_pool_ratio,
    risk_grid,
)
from .simulation import (
    CollusionPolicy,
    HonestPolicy,
    ScenarioConfig,
    SimulationReport,
    collect_metrics,
    run_scenario,
    spawn_agents,
)

__version__ = "0.1.0"
