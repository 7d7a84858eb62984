"""Committee selection: determinism, stake weighting, slashing."""

import math
from collections import Counter

import pytest
from scipy import stats

from claimstake import codec
from claimstake.chain import StakeEntry, StakeLedger, genesis_state
from claimstake.committee import (
    Committee,
    SelectionSeed,
    derive_seed,
    mark_slashed,
    select_committee,
)
from claimstake.envelope import KeyFingerprint, digest
from claimstake.errors import ChainError, CommitteeError, LedgerError, PoolExhaustedError

from conftest import HonestNet
from test_chain import small_genesis


def fp(i: int) -> KeyFingerprint:
    return KeyFingerprint(digest(b"member-%d" % i))


def ledger(stakes: dict[int, int], ineligible: set[int] = frozenset()) -> StakeLedger:
    return StakeLedger(
        entries={
            fp(i): StakeEntry(stake=s, eligible=(i not in ineligible) and s >= 1)
            for i, s in stakes.items()
        }
    )


def seed(i: int, height: int = 0) -> SelectionSeed:
    return SelectionSeed(seed=digest(b"trial-seed" + codec.encode_u64(i)), height=height)


def test_derive_seed_deterministic_and_height_bound():
    state = genesis_state(small_genesis())
    a = derive_seed(state, 0)
    b = derive_seed(state, 0)
    assert a == b
    with pytest.raises(ChainError):
        derive_seed(state, 1)


def test_derive_seed_changes_after_block():
    net = HonestNet(stakers=6, claimants=1, label=b"seednet")
    before = derive_seed(net.state, 0)
    from claimstake.protocol import run_round

    outcome, state = run_round(net.state, net.registry, [net.valid_ticket()], rng=net.seal_rng)
    after = derive_seed(state, 1)
    assert before.seed != after.seed


def test_select_committee_exact_agreement():
    pool = ledger({i: 10 for i in range(12)})
    for i in range(50):
        assert select_committee(pool, seed(i)) == select_committee(pool, seed(i))


def test_five_eligible_forced_committee():
    pool = ledger({i: 7 for i in range(5)})
    committee = select_committee(pool, seed(3))
    assert set(committee.members) == {fp(i) for i in range(5)}


def test_pool_exhausted_below_five():
    pool = ledger({i: 7 for i in range(4)})
    with pytest.raises(PoolExhaustedError):
        select_committee(pool, seed(0))


def test_members_always_distinct_even_with_dominant_stake():
    stakes = {0: 9900}
    stakes.update({i: 1 for i in range(1, 8)})
    pool = ledger(stakes)
    for i in range(200):
        committee = select_committee(pool, seed(i))
        assert len(set(committee.members)) == 5
        # the whale holds at most one seat
        assert sum(1 for m in committee.members if m == fp(0)) <= 1


def test_ineligible_and_zero_stake_never_selected():
    stakes = {i: 10 for i in range(8)}
    stakes[8] = 0
    stakes[9] = 10
    pool = ledger(stakes, ineligible={9})
    barred = {fp(8), fp(9)}
    for i in range(10_000):
        committee = select_committee(pool, seed(i))
        assert not barred & set(committee.members)


def test_validator_frequency_matches_stake_weights():
    # 20 nodes, one with double stake: first-draw marginal is stake/total.
    stakes = {i: 1 for i in range(20)}
    stakes[0] = 2
    pool = ledger(stakes)
    trials = 100_000
    counts = Counter()
    for i in range(trials):
        counts[select_committee(pool, seed(i)).validator] += 1

    total_stake = 21
    p_whale = 2 / total_stake
    freq = counts[fp(0)] / trials
    se = math.sqrt(p_whale * (1 - p_whale) / trials)
    assert abs(freq - p_whale) <= 3 * se

    observed = [counts[fp(i)] for i in range(20)]
    expected = [trials * stakes[i] / total_stake for i in range(20)]
    chi = stats.chisquare(observed, expected)
    assert chi.pvalue > 1e-3


def test_mark_slashed_zeroes_and_disqualifies():
    pool = ledger({i: 10 for i in range(6)})
    slashed = mark_slashed(pool, fp(2))
    assert slashed.entries[fp(2)] == StakeEntry(stake=0, eligible=False)
    assert slashed.eligible_count() == 5
    # other entries untouched; original ledger unmodified
    assert slashed.entries[fp(1)] == StakeEntry(stake=10, eligible=True)
    assert pool.entries[fp(2)] == StakeEntry(stake=10, eligible=True)


def test_slashed_member_excluded_from_selection():
    pool = mark_slashed(ledger({i: 10 for i in range(6)}), fp(4))
    for i in range(2_000):
        assert fp(4) not in select_committee(pool, seed(i)).members


def test_mark_slashed_unknown_or_repeat_errors():
    pool = ledger({i: 10 for i in range(6)})
    with pytest.raises(LedgerError):
        mark_slashed(pool, fp(99))
    once = mark_slashed(pool, fp(1))
    with pytest.raises(LedgerError):
        mark_slashed(once, fp(1))


def test_committee_shape_validated():
    with pytest.raises(CommitteeError):
        Committee(validator=fp(0), attestors=(fp(1), fp(2), fp(3)), round_height=0)
    with pytest.raises(CommitteeError):
        Committee(validator=fp(0), attestors=(fp(0), fp(1), fp(2), fp(3)), round_height=0)
