"""Committee-compromise probability: exact analytics and Monte Carlo.

A round can be disturbed exactly when colluders hold at least `threshold`
(default 3) of the `committee_size` (default 5) seats. Seats are drawn
without replacement from a pool of `v` eligible stakers containing `d`
colluders, so the seated-colluder count is hypergeometric and

    p_no_disturb = sum_{j < t} C(d, j) * C(v - d, k - j) / C(v, k)
    p_disturb    = 1 - p_no_disturb

computed in exact rational arithmetic (big-integer binomials, safe for pools
into the millions). The Monte Carlo estimator draws committees directly and
exists as an independent cross-check of the closed form.

Population-level parameters mirror the simulation harness: a population of
`n` yields a pool of `floor(pool_ratio * n)` with `floor(disturbance_ratio *
pool)` colluders. Ratios are interpreted as decimals (via their shortest
string form) before flooring, so `0.29 * 100` is a pool of 29, not 28.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ParameterError

DEFAULT_COMMITTEE_SIZE = 5
DEFAULT_THRESHOLD = 3


def floor_ratio(ratio: float, count: int) -> int:
    """floor(ratio * count) with the ratio read as an exact decimal."""
    return math.floor(Fraction(str(ratio)) * count)


@dataclass(frozen=True)
class RiskParams:
    """Population, pool ratio, disturbance ratio, and the committee rule."""

    population: int
    pool_ratio: float
    disturbance_ratio: float
    committee_size: int = DEFAULT_COMMITTEE_SIZE
    threshold: int = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.population < 1:
            raise ParameterError("population must be positive")
        if not 0 < self.pool_ratio <= 1:
            raise ParameterError("pool_ratio must be in (0, 1]")
        if not 0 <= self.disturbance_ratio <= 1:
            raise ParameterError("disturbance_ratio must be in [0, 1]")
        if self.committee_size < 1:
            raise ParameterError("committee_size must be positive")
        if not 1 <= self.threshold <= self.committee_size:
            raise ParameterError("threshold must be in [1, committee_size]")

    @property
    def pool_size(self) -> int:
        return floor_ratio(self.pool_ratio, self.population)

    @property
    def colluder_count(self) -> int:
        return floor_ratio(self.disturbance_ratio, self.pool_size)

    def feasible(self) -> bool:
        return self.pool_size >= self.committee_size


@dataclass(frozen=True)
class RiskResult:
    """Exact compromise probability for one parameter point. The two
    probabilities are exact complements by construction."""

    pool_size: int
    colluder_count: int
    p_no_disturb: Fraction
    p_disturb: Fraction


def _check_pool(v: int, d: int, k: int) -> None:
    if v < k:
        raise ParameterError(f"pool of {v} cannot seat a committee of {k}")
    if d > v:
        raise ParameterError(f"{d} colluders cannot exceed the pool of {v}")


def p_disturb_analytic(params: RiskParams) -> RiskResult:
    """Exact hypergeometric tail: probability that at least `threshold` of
    the sampled committee are colluders."""
    v, d, k = params.pool_size, params.colluder_count, params.committee_size
    _check_pool(v, d, k)

    total = math.comb(v, k)
    safe = sum(
        math.comb(d, j) * math.comb(v - d, k - j) for j in range(params.threshold)
    )
    p_no_disturb = Fraction(safe, total)
    return RiskResult(
        pool_size=v,
        colluder_count=d,
        p_no_disturb=p_no_disturb,
        p_disturb=1 - p_no_disturb,
    )


def p_disturb_montecarlo(
    params: RiskParams, trials: int, rng_seed: int
) -> tuple[float, float]:
    """Estimate the compromise probability by drawing committees.

    Each trial draws `committee_size` of the pool without replacement (via
    the k-smallest-random-keys method) and checks whether at least
    `threshold` colluders were seated. Returns (estimate, standard error);
    deterministic for a given seed.
    """
    if trials < 1:
        raise ParameterError("trials must be positive")
    v, d, k = params.pool_size, params.colluder_count, params.committee_size
    _check_pool(v, d, k)

    rng = np.random.Generator(np.random.PCG64(rng_seed))
    hits = 0
    remaining = trials
    chunk = max(1, min(trials, (1 << 22) // max(v, 1)))
    while remaining > 0:
        m = min(chunk, remaining)
        keys = rng.random((m, v))
        kth = np.partition(keys, k - 1, axis=1)[:, k - 1 : k]
        seated_colluders = (keys[:, :d] <= kth).sum(axis=1)
        hits += int((seated_colluders >= params.threshold).sum())
        remaining -= m

    estimate = hits / trials
    stderr = math.sqrt(estimate * (1.0 - estimate) / trials)
    return estimate, stderr


def _params_for(
    population: int,
    pool_ratio: float,
    disturbance_ratio: float,
    committee_size: int,
    threshold: int,
) -> RiskParams:
    return RiskParams(
        population=population,
        pool_ratio=pool_ratio,
        disturbance_ratio=disturbance_ratio,
        committee_size=committee_size,
        threshold=threshold,
    )


def min_population_for_risk(
    pool_ratio: float,
    disturbance_ratio: float,
    target: float,
    search_range: tuple[int, int],
    committee_size: int = DEFAULT_COMMITTEE_SIZE,
    threshold: int = DEFAULT_THRESHOLD,
) -> int | None:
    """Smallest population in the range from which the compromise probability
    stays at or below the target for every larger population in the range.

    Flooring makes the probability non-monotone in the population, so the
    range is scanned exhaustively (from the top) rather than bisected.
    Populations whose pool cannot seat a committee never qualify.
    """
    if not 0 < target <= 1:
        raise ParameterError("target must be in (0, 1]")
    low, high = search_range
    if low < 1 or high < low:
        raise ParameterError(f"invalid search range [{low}, {high}]")

    best: int | None = None
    for population in range(high, low - 1, -1):
        params = _params_for(
            population, pool_ratio, disturbance_ratio, committee_size, threshold
        )
        if not params.feasible():
            break
        if p_disturb_analytic(params).p_disturb > target:
            break
        best = population
    return best


RATIO_GRID = tuple(Fraction(i, 100) for i in range(1, 101))


def required_pool_ratio(
    population: int,
    disturbance_ratio: float,
    target: float,
    committee_size: int = DEFAULT_COMMITTEE_SIZE,
    threshold: int = DEFAULT_THRESHOLD,
) -> float | None:
    """Smallest pool ratio on the percent grid {0.01 .. 1.00} whose pool can
    seat a committee and whose compromise probability meets the target."""
    if not 0 < target <= 1:
        raise ParameterError("target must be in (0, 1]")
    if population < committee_size:
        raise ParameterError(
            f"population {population} cannot form any committee of {committee_size}"
        )

    for ratio in RATIO_GRID:
        params = _params_for(
            population, float(ratio), disturbance_ratio, committee_size, threshold
        )
        if not params.feasible():
            continue
        if p_disturb_analytic(params).p_disturb <= target:
            return float(ratio)
    return None


@dataclass(frozen=True)
class GridCell:
    pool_ratio: float
    disturbance_ratio: float
    pool_size: int
    colluder_count: int
    p_disturb: Fraction | None
    feasible: bool


def _ratio_steps(bounds: tuple[float, float], step: float) -> list[Fraction]:
    low, high = Fraction(str(bounds[0])), Fraction(str(bounds[1]))
    stride = Fraction(str(step))
    if stride <= 0:
        raise ParameterError("step must be positive")
    if low > high:
        raise ParameterError("range lower bound exceeds upper bound")
    values = []
    value = low
    while value <= high:
        values.append(value)
        value += stride
    return values


def risk_grid(
    population: int,
    pool_ratio_range: tuple[float, float],
    disturbance_ratio_range: tuple[float, float],
    step: float,
    committee_size: int = DEFAULT_COMMITTEE_SIZE,
    threshold: int = DEFAULT_THRESHOLD,
) -> list[GridCell]:
    """Dense grid of exact compromise probabilities for heat-map emission.

    Cells whose pool cannot seat a committee are marked infeasible rather
    than reported as zero risk.
    """
    cells = []
    for pool_ratio in _ratio_steps(pool_ratio_range, step):
        for disturbance_ratio in _ratio_steps(disturbance_ratio_range, step):
            if not 0 < pool_ratio <= 1 or not 0 <= disturbance_ratio <= 1:
                raise ParameterError("grid ratios must lie in (0, 1] and [0, 1]")
            params = _params_for(
                population,
                float(pool_ratio),
                float(disturbance_ratio),
                committee_size,
                threshold,
            )
            if params.feasible():
                result = p_disturb_analytic(params)
                cells.append(
                    GridCell(
                        pool_ratio=float(pool_ratio),
                        disturbance_ratio=float(disturbance_ratio),
                        pool_size=params.pool_size,
                        colluder_count=params.colluder_count,
                        p_disturb=result.p_disturb,
                        feasible=True,
                    )
                )
            else:
                cells.append(
                    GridCell(
                        pool_ratio=float(pool_ratio),
                        disturbance_ratio=float(disturbance_ratio),
                        pool_size=params.pool_size,
                        colluder_count=params.colluder_count,
                        p_disturb=None,
                        feasible=False,
                    )
                )
    return cells
