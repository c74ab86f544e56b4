"""Trader population and stochastic opinion switching.

Agents hold one of three opinions: fundamentalists anchor on the fundamental
value, while optimists and pessimists (jointly, chartists) follow the price
trend. Every step each agent may switch opinion; the switching rates combine
a herding term (group sizes) with the relative profitability of strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

FUNDAMENTALIST = 0
OPTIMIST = 1
PESSIMIST = 2

# Groups holding less than this fraction of the population cannot be left,
# which keeps every opinion alive (no absorbing state).
MIN_GROUP_FRACTION = 0.008


class AgentType(IntEnum):
    FUNDAMENTALIST = FUNDAMENTALIST
    OPTIMIST = OPTIMIST
    PESSIMIST = PESSIMIST


@dataclass(frozen=True)
class SwitchParams:
    v1: float = 2.0
    v2: float = 0.6
    alpha1: float = 0.6
    alpha2: float = 1.5
    alpha3: float = 1.0
    big_r: float = 0.0004  # nominal return rate; r = big_r * p_f is recomputed each step
    s: float = 0.75

    def __post_init__(self):
        for name in ("v1", "v2", "alpha1", "alpha2", "alpha3", "big_r", "s"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"switch parameter {name} must be > 0")


@dataclass(frozen=True)
class PopulationCounts:
    n_f: int
    n_plus: int
    n_minus: int

    @property
    def total(self) -> int:
        return self.n_f + self.n_plus + self.n_minus

    @property
    def n_c(self) -> int:
        return self.n_plus + self.n_minus

    @property
    def x(self) -> float:
        """Opinion index in [-1, 1]; defined as 0 when no chartists exist
        (every rate that consumes it carries a zero prefactor then)."""
        n_c = self.n_c
        if n_c == 0:
            return 0.0
        return (self.n_plus - self.n_minus) / n_c


@dataclass
class Agent:
    """Snapshot view of one trader; cash is reported in currency units."""

    id: int
    type: AgentType
    horizon: int
    cash: float
    shares: int


@dataclass(frozen=True)
class MarketView:
    """Per-step market context consumed by the switching rules."""

    p: float
    p_f: float
    trend_f: float  # average price trend over the fundamentalist horizon
    trend_c: float  # average price trend over the chartist horizon


@dataclass
class SwitchStats:
    switches: int = 0
    clamped: int = 0


def average_price_trend(price_history, horizon: int, dt: float) -> float:
    """Mean one-step price change per unit time over the trailing window.

    Telescopes to (p_last - p_first) / (h * dt); a shorter history shrinks
    the window, and fewer than two prices give 0 (cold start).
    """
    n = len(price_history)
    if n < 2 or horizon < 1:
        return 0.0
    h = min(horizon, n - 1)
    return (price_history[-1] - price_history[-1 - h]) / (h * dt)


def compute_U1(x: float, trend: float, p: float, params: SwitchParams) -> float:
    """Herding-plus-trend signal steering flows between optimists and pessimists."""
    if p <= 0.0:
        raise ValueError("price must be > 0")
    return params.alpha1 * x + (params.alpha2 / params.v1) * (trend / p)


def compute_U2(direction: int, trend: float, p: float, p_f: float, params: SwitchParams) -> float:
    """Profit-differential signal between one chartist camp and fundamentalism.

    The chartist side earns the nominal rate plus the trend; fundamentalists
    forgo it but profit from any gap between price and fundamental value.
    """
    if p <= 0.0 or p_f <= 0.0:
        raise ValueError("prices must be > 0")
    r = params.big_r * p_f
    excess = (r + trend / params.v2) / p - params.big_r
    gap = params.s * abs((p_f - p) / p)
    if direction == OPTIMIST:
        return params.alpha3 * (excess - gap)
    if direction == PESSIMIST:
        return params.alpha3 * (-excess - gap)
    raise ValueError("direction must be OPTIMIST or PESSIMIST")


def transition_rate(
    from_type: int, to_type: int, counts: PopulationCounts, u: float, params: SwitchParams
) -> float:
    """Poisson rate for one opinion change, before scaling by the step size.

    `u` is the signal for the pair: the chartist-chartist signal for flows
    between optimists and pessimists, otherwise the profit differential of
    the chartist camp involved. Its sign convention: flows toward the
    optimist camp (or away from fundamentalism) take exp(+u), the reverse
    flows exp(-u).
    """
    if from_type == to_type:
        raise ValueError("transition requires two distinct types")
    n = counts.total
    if n == 0:
        raise ValueError("empty population")
    pair = (from_type, to_type)
    if pair == (PESSIMIST, OPTIMIST):
        return params.v1 * (counts.n_c / n) * math.exp(u)
    if pair == (OPTIMIST, PESSIMIST):
        return params.v1 * (counts.n_c / n) * math.exp(-u)
    if pair == (FUNDAMENTALIST, OPTIMIST):
        return params.v2 * (counts.n_plus / n) * math.exp(u)
    if pair == (OPTIMIST, FUNDAMENTALIST):
        return params.v2 * (counts.n_f / n) * math.exp(-u)
    if pair == (FUNDAMENTALIST, PESSIMIST):
        return params.v2 * (counts.n_minus / n) * math.exp(u)
    if pair == (PESSIMIST, FUNDAMENTALIST):
        return params.v2 * (counts.n_f / n) * math.exp(-u)
    raise ValueError(f"unknown transition pair {pair}")


def transition_probability(
    from_type: int,
    to_type: int,
    counts: PopulationCounts,
    u: float,
    params: SwitchParams,
    dt: float,
) -> float:
    """Per-step switching probability rate * dt, clamped into [0, 1]."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    prob = transition_rate(from_type, to_type, counts, u, params) * dt
    return min(max(prob, 0.0), 1.0)


class Population:
    """Array-backed population; cash is accounted in integer tick units so
    conservation checks are exact."""

    def __init__(
        self,
        types: np.ndarray,
        cash_ticks: np.ndarray,
        shares: np.ndarray,
        horizon_f: int,
        horizon_c: int,
        tick_size: float,
    ):
        self.types = np.asarray(types, dtype=np.int8)
        self.cash_ticks = np.asarray(cash_ticks, dtype=np.int64)
        self.shares = np.asarray(shares, dtype=np.int64)
        self.horizon_f = int(horizon_f)
        self.horizon_c = int(horizon_c)
        self.tick_size = float(tick_size)
        if not (len(self.types) == len(self.cash_ticks) == len(self.shares)):
            raise ValueError("population arrays must have equal length")

    @classmethod
    def initial(
        cls,
        n_agents: int,
        frac_f: float,
        frac_opt: float,
        cash: float,
        shares: int,
        horizon_f: int,
        horizon_c: int,
        tick_size: float,
    ) -> "Population":
        n_f = round(frac_f * n_agents)
        n_plus = round(frac_opt * n_agents)
        n_minus = n_agents - n_f - n_plus
        if min(n_f, n_plus, n_minus) < 0:
            raise ValueError("initial fractions exceed 1")
        types = np.concatenate(
            [
                np.full(n_f, FUNDAMENTALIST, dtype=np.int8),
                np.full(n_plus, OPTIMIST, dtype=np.int8),
                np.full(n_minus, PESSIMIST, dtype=np.int8),
            ]
        )
        cash_ticks = np.full(n_agents, round(cash / tick_size), dtype=np.int64)
        holdings = np.full(n_agents, int(shares), dtype=np.int64)
        return cls(types, cash_ticks, holdings, horizon_f, horizon_c, tick_size)

    @property
    def size(self) -> int:
        return len(self.types)

    def counts(self) -> PopulationCounts:
        n_plus = int(np.count_nonzero(self.types == OPTIMIST))
        n_minus = int(np.count_nonzero(self.types == PESSIMIST))
        return PopulationCounts(self.size - n_plus - n_minus, n_plus, n_minus)

    def horizon_of(self, agent_id: int) -> int:
        return self.horizon_f if self.types[agent_id] == FUNDAMENTALIST else self.horizon_c

    def cash_of(self, agent_id: int) -> float:
        return float(self.cash_ticks[agent_id]) * self.tick_size

    def snapshot(self) -> list[Agent]:
        return [
            Agent(
                id=i,
                type=AgentType(int(self.types[i])),
                horizon=self.horizon_of(i),
                cash=self.cash_of(i),
                shares=int(self.shares[i]),
            )
            for i in range(self.size)
        ]


def apply_switching(
    pop: Population,
    market: MarketView,
    params: SwitchParams,
    dt: float,
    rng: np.random.Generator,
    only=None,
) -> SwitchStats:
    """One synchronous switching sweep over the whole population.

    Counts and signals are frozen at entry, one uniform draw decides each
    agent's move, and the two admissible targets per type split the unit
    interval in a fixed order (chartists: other camp first, then
    fundamentalist; fundamentalists: optimist first, then pessimist).
    Opinion groups below MIN_GROUP_FRACTION of the population cannot be left.
    `only` restricts the sweep to the given agent ids (the per-trade variant);
    the draw stream is consumed identically either way.
    """
    counts = pop.counts()
    n = counts.total
    stats = SwitchStats()
    if n == 0:
        return stats

    u1 = compute_U1(counts.x, market.trend_c, market.p, params)
    u21_c = compute_U2(OPTIMIST, market.trend_c, market.p, market.p_f, params)
    u21_f = compute_U2(OPTIMIST, market.trend_f, market.p, market.p_f, params)
    u22_c = compute_U2(PESSIMIST, market.trend_c, market.p, market.p_f, params)
    u22_f = compute_U2(PESSIMIST, market.trend_f, market.p, market.p_f, params)

    # Each agent evaluates the trend over its own current horizon, so paired
    # flows use differently-horizoned signals.
    raw = {
        (OPTIMIST, PESSIMIST): transition_rate(OPTIMIST, PESSIMIST, counts, u1, params) * dt,
        (PESSIMIST, OPTIMIST): transition_rate(PESSIMIST, OPTIMIST, counts, u1, params) * dt,
        (OPTIMIST, FUNDAMENTALIST): transition_rate(OPTIMIST, FUNDAMENTALIST, counts, u21_c, params) * dt,
        (FUNDAMENTALIST, OPTIMIST): transition_rate(FUNDAMENTALIST, OPTIMIST, counts, u21_f, params) * dt,
        (PESSIMIST, FUNDAMENTALIST): transition_rate(PESSIMIST, FUNDAMENTALIST, counts, u22_c, params) * dt,
        (FUNDAMENTALIST, PESSIMIST): transition_rate(FUNDAMENTALIST, PESSIMIST, counts, u22_f, params) * dt,
    }
    stats.clamped = sum(1 for v in raw.values() if v > 1.0)
    prob = {pair: min(max(v, 0.0), 1.0) for pair, v in raw.items()}

    frozen_f = counts.n_f / n < MIN_GROUP_FRACTION
    frozen_plus = counts.n_plus / n < MIN_GROUP_FRACTION
    frozen_minus = counts.n_minus / n < MIN_GROUP_FRACTION

    types = pop.types
    u = rng.random(n)
    new_types = types.copy()

    if not frozen_plus:
        is_o = types == OPTIMIST
        p1 = prob[(OPTIMIST, PESSIMIST)]
        p2 = prob[(OPTIMIST, FUNDAMENTALIST)]
        new_types[is_o & (u < p1)] = PESSIMIST
        new_types[is_o & (u >= p1) & (u < p1 + p2)] = FUNDAMENTALIST
    if not frozen_minus:
        is_p = types == PESSIMIST
        p1 = prob[(PESSIMIST, OPTIMIST)]
        p2 = prob[(PESSIMIST, FUNDAMENTALIST)]
        new_types[is_p & (u < p1)] = OPTIMIST
        new_types[is_p & (u >= p1) & (u < p1 + p2)] = FUNDAMENTALIST
    if not frozen_f:
        is_f = types == FUNDAMENTALIST
        p1 = prob[(FUNDAMENTALIST, OPTIMIST)]
        p2 = prob[(FUNDAMENTALIST, PESSIMIST)]
        new_types[is_f & (u < p1)] = OPTIMIST
        new_types[is_f & (u >= p1) & (u < p1 + p2)] = PESSIMIST

    if only is not None:
        allowed = np.zeros(n, dtype=bool)
        allowed[np.asarray(only, dtype=int)] = True
        new_types = np.where(allowed, new_types, types)

    stats.switches = int(np.count_nonzero(new_types != types))
    pop.types = new_types
    return stats
