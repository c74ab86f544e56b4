"""Exogenous fundamental value, driven by a geometric Brownian motion.

The log value receives an independent Gaussian increment each simulation
step, scaled so that the aggregate increment over one unit of time (one
trading period) has the configured standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FundamentalState:
    value: float
    time: int = 0


def apply_log_increment(state: FundamentalState, eps: float) -> FundamentalState:
    """Advance one step with a given log increment; the exponential map keeps value > 0."""
    value = state.value * math.exp(eps)
    if not math.isfinite(value) or value <= 0.0:
        raise FloatingPointError(
            f"fundamental value became non-finite at t={state.time + 1} (eps={eps!r})"
        )
    return FundamentalState(value=value, time=state.time + 1)


def step_fundamental(
    state: FundamentalState, sigma_eps: float, dt: float, rng: np.random.Generator
) -> FundamentalState:
    """One Gaussian log-step of size sigma_eps * sqrt(dt).

    Summing 1/dt consecutive steps gives a unit-time log increment with
    standard deviation sigma_eps.
    """
    if sigma_eps < 0.0:
        raise ValueError("sigma_eps must be >= 0")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    eps = sigma_eps * math.sqrt(dt) * rng.standard_normal()
    return apply_log_increment(state, eps)


def fundamental_path(
    p0: float, sigma_eps: float, dt: float, n_steps: int, rng: np.random.Generator
) -> np.ndarray:
    """Full value path as an array of length n_steps + 1, path[0] == p0.

    Consumes the generator exactly like n_steps calls of step_fundamental;
    the vectorised cumulative sum only changes float rounding, not the draw
    sequence.
    """
    if p0 <= 0.0:
        raise ValueError("p0 must be > 0")
    if sigma_eps < 0.0:
        raise ValueError("sigma_eps must be >= 0")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    eps = rng.standard_normal(n_steps) * (sigma_eps * math.sqrt(dt))
    path = np.empty(n_steps + 1)
    path[0] = p0
    if n_steps:
        path[1:] = np.exp(math.log(p0) + np.cumsum(eps))
    if not np.all(np.isfinite(path)):
        bad = int(np.flatnonzero(~np.isfinite(path))[0])
        raise FloatingPointError(f"fundamental path non-finite at step {bad}")
    return path
