"""Tests for expectations, reservation offsets and order pricing."""

import math

import numpy as np
import pytest

from market_abm.book import Side
from market_abm.expectations import (
    ExpectationParams,
    decide_order,
    draw_k,
    expected_price,
    rolling_sigma,
)
from market_abm.population import FUNDAMENTALIST, OPTIMIST, PESSIMIST

PARAMS = ExpectationParams()


def brute_force_sigma(history, tau):
    """Literal transcription of the dispersion definition used as an oracle."""
    t = len(history)
    devs = [history[t - k] for k in range(1, tau + 1)]
    mean = sum(history[t - 1 - k] for k in range(1, tau + 1)) / tau
    var = sum((p - mean) ** 2 for p in devs) * math.sqrt(tau) / tau
    return math.sqrt(var)


class TestRollingSigma:
    def test_constant_history(self):
        assert rolling_sigma([250.0] * 30, 10) == 0.0

    def test_two_point_example(self):
        # window [102], mean from the step before: 100
        assert rolling_sigma([100.0, 102.0], 1) == pytest.approx(2.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        history = list(300.0 + np.cumsum(rng.normal(0, 1, 400)))
        for tau in (1, 2, 17, 100, 399):
            got = rolling_sigma(history, tau)
            want = brute_force_sigma(history, tau)
            assert got == pytest.approx(want, rel=1e-12)

    def test_short_history_shrinks_window(self):
        history = [100.0, 101.0, 103.0]
        assert rolling_sigma(history, 50) == pytest.approx(brute_force_sigma(history, 2), rel=1e-12)

    def test_degenerate_history(self):
        assert rolling_sigma([300.0], 100) == 0.0
        assert rolling_sigma([], 100) == 0.0

    def test_aligned_variant_differs(self):
        rng = np.random.default_rng(1)
        history = list(300.0 + np.cumsum(rng.normal(0, 1, 50)))
        assert rolling_sigma(history, 10, aligned=True) != rolling_sigma(history, 10)


class _ZeroNormal:
    """Stub generator whose normal draws are exactly zero."""

    def normal(self, loc, scale):
        return 0.0


class TestExpectedPrice:
    def test_fundamentalist_zero_draw(self):
        value = expected_price(FUNDAMENTALIST, 290.0, 305.0, 3.0, 0.005, PARAMS, _ZeroNormal())
        assert value == 305.0

    def test_optimist_degenerate_dispersion(self):
        rng = np.random.default_rng(2)
        value = expected_price(OPTIMIST, 290.0, 305.0, 0.0, 0.005, PARAMS, rng)
        assert value == 290.0

    def test_pessimist_never_above_price(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            value = expected_price(PESSIMIST, 290.0, 305.0, 2.0, 0.005, PARAMS, rng)
            assert value <= 290.0

    def test_fundamentalist_unbiased(self):
        rng = np.random.default_rng(4)
        n = 100_000
        draws = np.array([
            expected_price(FUNDAMENTALIST, 290.0, 300.0, 0.0, 0.005, PARAMS, rng)
            for _ in range(n)
        ])
        se = 300.0 * 0.005 / math.sqrt(n)
        assert abs(draws.mean() - 300.0) < 3 * se

    def test_chartist_gap_has_half_gaussian_mean(self):
        rng = np.random.default_rng(5)
        n = 100_000
        sigma_tau = 2.0
        scale = sigma_tau / PARAMS.gamma_c
        opt = np.array([expected_price(OPTIMIST, 300.0, 300.0, sigma_tau, 0.005, PARAMS, rng) for _ in range(n)])
        pes = np.array([expected_price(PESSIMIST, 300.0, 300.0, sigma_tau, 0.005, PARAMS, rng) for _ in range(n)])
        expected_gap = 2 * scale * math.sqrt(2 / math.pi)
        se = 2 * scale / math.sqrt(n)
        assert abs((opt.mean() - pes.mean()) - expected_gap) < 4 * se

    def test_floored_at_one_tick(self):
        rng = np.random.default_rng(6)
        values = [expected_price(PESSIMIST, 1.0, 1.0, 50.0, 0.005, PARAMS, rng) for _ in range(200)]
        assert min(values) >= PARAMS.tick


class TestDrawK:
    def test_mean(self):
        rng = np.random.default_rng(7)
        samples = np.array([draw_k(rng, 0.1) for _ in range(1_000_000)])
        assert samples.mean() == pytest.approx(0.1, abs=0.001)

    def test_cdf_at_scale(self):
        rng = np.random.default_rng(8)
        samples = np.array([draw_k(rng, 0.1) for _ in range(200_000)])
        assert (samples <= 0.1).mean() == pytest.approx(1 - math.exp(-1), abs=0.005)

    def test_support_nonnegative(self):
        rng = np.random.default_rng(9)
        assert all(draw_k(rng, 0.1) >= 0 for _ in range(1000))

    def test_scale_validation(self):
        with pytest.raises(ValueError):
            draw_k(np.random.default_rng(0), 0.0)


class TestDecideOrder:
    def test_no_order_when_expectation_equals_price(self):
        assert decide_order(1, 100, 300.0, 300.0, 0.05, 0.0005) is None

    def test_buy_discounts_expectation(self):
        intent = decide_order(1, 100, 310.0, 300.0, 0.1, 0.0005)
        assert intent.side == Side.BUY
        assert intent.price == pytest.approx(279.0)
        assert intent.ticks == 558000

    def test_sell_zero_offset_boundary(self):
        intent = decide_order(2, 300, 290.0, 300.0, 0.0, 0.0005)
        assert intent.side == Side.SELL
        assert intent.price == pytest.approx(290.0)
        assert intent.ticks == 580000

    def test_reservations_on_grid_and_ordered(self):
        rng = np.random.default_rng(10)
        tick = 0.0005
        for _ in range(2000):
            expectation = float(rng.uniform(1.0, 600.0))
            p = float(rng.uniform(1.0, 600.0))
            k = float(rng.exponential(0.1))
            intent = decide_order(3, 100, expectation, p, k, tick)
            if intent is None:
                continue
            # buy rounds down, so reservation <= expectation*(1-k) <= expectation
            if intent.side == Side.BUY:
                assert intent.price <= expectation + tick
            else:
                assert intent.price >= expectation - tick
            # exact grid multiple
            assert intent.ticks * tick == pytest.approx(intent.price, rel=1e-12)
            assert abs(intent.price / tick - round(intent.price / tick)) < 1e-6

    def test_degenerate_reservation_gives_no_order(self):
        # k >= 1 forces the buy reservation to zero or below
        assert decide_order(4, 100, 310.0, 300.0, 1.0, 0.0005) is None

    def test_horizon_carried_through(self):
        intent = decide_order(5, 300, 310.0, 300.0, 0.1, 0.0005)
        assert intent.horizon == 300


def test_params_validation():
    with pytest.raises(ValueError):
        ExpectationParams(gamma_f=0.1, gamma_c=1.0)
