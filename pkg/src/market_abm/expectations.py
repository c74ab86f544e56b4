"""Price expectations and order pricing for the trading agent of a step.

Fundamentalists expect the fundamental value plus proportional noise;
optimists (pessimists) expect the current price shifted up (down) by a
half-Gaussian scaled by recent price dispersion. The reservation price then
discounts (marks up) the expectation by an exponentially distributed factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .book import OrderIntent, Side
from .population import FUNDAMENTALIST, OPTIMIST, PESSIMIST


@dataclass(frozen=True)
class ExpectationParams:
    gamma_f: float = 1.0
    gamma_c: float = 0.1
    k_scale: float = 0.1  # mean of the exponential reservation offset
    tick: float = 0.0005

    def __post_init__(self):
        if not (self.gamma_f > self.gamma_c > 0.0):
            raise ValueError("risk aversion must satisfy gamma_f > gamma_c > 0")
        if self.tick <= 0.0 or self.k_scale <= 0.0:
            raise ValueError("tick and k_scale must be > 0")


def rolling_sigma(price_history, tau: int, aligned: bool = False) -> float:
    """Trailing price dispersion over a window of tau steps.

    As specified, the deviation window ends one step after the window that
    sets the mean, and the squared deviations carry a sqrt(tau)/tau weight.
    `aligned=True` evaluates the variant with both windows coincident, kept
    for sensitivity runs.
    """
    n = len(price_history)
    if n < 2:
        return 0.0
    t = min(tau, n - 1)
    window = np.asarray(price_history[n - t : n], dtype=float)
    if aligned:
        mean = float(window.mean())
    else:
        mean = float(np.mean(np.asarray(price_history[n - t - 1 : n - 1], dtype=float)))
    var = float(np.sum((window - mean) ** 2)) * math.sqrt(t) / t
    return math.sqrt(var)


def expected_price(
    agent_type: int,
    p: float,
    p_f: float,
    sigma_tau: float,
    sigma_eps: float,
    params: ExpectationParams,
    rng: np.random.Generator,
) -> float:
    """Draw one price expectation for the given agent type; floored at one tick."""
    if p <= 0.0 or p_f <= 0.0:
        raise ValueError("prices must be > 0")
    if agent_type == FUNDAMENTALIST:
        value = p_f * (1.0 + rng.normal(0.0, sigma_eps / params.gamma_f))
    elif agent_type == OPTIMIST:
        value = p + abs(rng.normal(0.0, sigma_tau / params.gamma_c))
    elif agent_type == PESSIMIST:
        value = p - abs(rng.normal(0.0, sigma_tau / params.gamma_c))
    else:
        raise ValueError(f"unknown agent type {agent_type}")
    return max(value, params.tick)


def draw_k(rng: np.random.Generator, scale: float) -> float:
    """Exponential reservation offset with mean `scale`."""
    if scale <= 0.0:
        raise ValueError("scale must be > 0")
    return float(rng.exponential(scale))


def _snap(price: float, tick: float, round_up: bool) -> int:
    q = price / tick
    nearest = round(q)
    if abs(q - nearest) <= 1e-6:  # already on grid up to float noise
        return int(nearest)
    return int(math.ceil(q)) if round_up else int(math.floor(q))


def decide_order(
    agent_id: int,
    horizon: int,
    expectation: float,
    p: float,
    k: float,
    tick: float,
) -> OrderIntent | None:
    """Turn an expectation into a one-unit priced intent, or no order.

    Expecting a rise makes the agent bid below the expectation; expecting a
    fall makes it ask above. Buy reservations round down to the grid, sell
    reservations round up, and a reservation at or below zero means no order.
    """
    if expectation <= 0.0 or p <= 0.0:
        raise ValueError("expectation and price must be > 0")
    if k < 0.0:
        raise ValueError("k must be >= 0")
    if expectation > p:
        side = Side.BUY
        ticks = _snap(expectation * (1.0 - k), tick, round_up=False)
    elif expectation < p:
        side = Side.SELL
        ticks = _snap(expectation * (1.0 + k), tick, round_up=True)
    else:
        return None
    if ticks <= 0:
        return None
    return OrderIntent(
        agent_id=agent_id, side=side, ticks=ticks, price=ticks * tick, horizon=horizon
    )
