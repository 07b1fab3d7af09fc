"""Demand arithmetic, price impact, windowing, and the closed market loop."""

import numpy as np
import pytest

from nst.calibrate import CalibConfig
from nst.discovery import ScriptedProposer
from nst.market import (
    DemandComponents,
    MarketConfig,
    MarketTrace,
    derive_seed,
    fundamental_demand,
    integrate_window,
    run_market,
    split_windows,
    step_price,
)


def test_derive_seed_depends_on_every_field():
    base = derive_seed(42, 1, 2, 3)
    assert base == derive_seed(42, 1, 2, 3)
    assert base != derive_seed(43, 1, 2, 3)
    assert base != derive_seed(42, 0, 2, 3)
    assert base != derive_seed(42, 1, 0, 3)
    assert base != derive_seed(42, 1, 2, 0)
    expected = int(
        np.random.SeedSequence(entropy=[42, 1, 2, 3]).generate_state(1, np.uint64)[0]
    )
    assert base == expected
    assert 0 <= base < 2**64


def test_fundamental_demand_arithmetic():
    assert fundamental_demand(1.2, 1.0, 1.0) == pytest.approx(0.2)
    assert fundamental_demand(0.8, 1.0, 2.0) == pytest.approx(-0.4)
    assert fundamental_demand(1.0, 1.0, 5.0) == 0.0


def test_step_price_single_trader_hand_example():
    comp = DemandComponents(
        fundamental=np.array([fundamental_demand(1.2, 1.0, 1.0)]), noise=0.0
    )
    assert step_price(1.0, comp, 0.1, 0.01) == pytest.approx(1.0002)


def test_step_price_noise_is_not_scaled_by_dt():
    comp = DemandComponents(fundamental=np.array([0.0]), noise=0.05)
    assert step_price(2.0, comp, 0.1, 0.01) == pytest.approx(2.0 + 0.1 * 0.05)


def test_demand_components_totals():
    comp = DemandComponents(fundamental=np.array([0.2, -0.5, 0.1]), noise=0.05)
    assert comp.fundamental_total == pytest.approx(-0.2)
    assert comp.total == pytest.approx(-0.15)


def test_split_windows_even():
    parts = split_windows(np.arange(250), 5)
    assert [p.size for p in parts] == [50] * 5
    np.testing.assert_array_equal(np.concatenate(parts), np.arange(250))


def test_split_windows_remainder_on_last():
    parts = split_windows(np.arange(252), 5)
    assert [p.size for p in parts] == [50, 50, 50, 50, 52]
    parts = split_windows(np.arange(8), 3)
    assert [p.size for p in parts] == [2, 2, 4]


def test_split_windows_validation():
    with pytest.raises(ValueError, match="at least 1"):
        split_windows(np.arange(10), 0)
    with pytest.raises(ValueError, match="too short for 5 windows"):
        split_windows(np.arange(9), 5)


def test_integrate_window_contracts_toward_constant_value():
    c, p0, kappa, lam, dt = 2.0, 1.0, 1.0, 0.1, 0.01
    n_steps = 200
    value_paths = np.full((1, n_steps + 1), c)
    prices, fund, noise = integrate_window(
        p0, value_paths, np.array([kappa]), lam, dt, np.zeros(n_steps), n_steps
    )
    k = np.arange(n_steps + 1)
    expected = c + (p0 - c) * (1.0 - lam * kappa * dt) ** k
    np.testing.assert_allclose(prices, expected, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(noise, np.zeros(n_steps))
    np.testing.assert_allclose(fund, kappa * (c - prices[:-1]), atol=1e-12)


def test_integrate_window_two_groups_pull_toward_weighted_mean():
    paths = np.vstack(
        [np.full(101, 1.0), np.full(101, 3.0)]
    )
    prices, _, _ = integrate_window(
        0.0, paths, np.array([1.0, 1.0]), 0.5, 0.05, np.zeros(100), 100
    )
    target = 2.0  # equal kappas: midpoint
    gaps = np.abs(prices - target)
    assert (np.diff(gaps) <= 1e-12).all()
    assert gaps[-1] < gaps[0] * 0.1


def test_integrate_window_matches_hand_recursion():
    rng = np.random.default_rng(5)
    paths = rng.random((3, 11))
    kappas = np.array([0.5, 1.0, 2.0])
    noise = 0.01 * rng.standard_normal(10)
    prices, fund, nz = integrate_window(1.0, paths, kappas, 0.2, 0.1, noise, 10)
    p = 1.0
    for k in range(10):
        f = float(np.sum(kappas * (paths[:, k] - p)))
        assert fund[k] == pytest.approx(f, rel=1e-15)
        assert nz[k] == noise[k]
        p = p + 0.2 * (f * 0.1 + noise[k])
        assert prices[k + 1] == pytest.approx(p, rel=1e-15)


def test_integrate_window_zero_kappa_is_pure_noise():
    noise = np.array([0.1, -0.2, 0.05])
    prices, fund, _ = integrate_window(
        1.0, np.zeros((1, 4)), np.array([0.0]), 0.5, 0.01, noise, 3
    )
    np.testing.assert_allclose(prices, 1.0 + 0.5 * np.concatenate([[0], np.cumsum(noise)]))
    np.testing.assert_array_equal(fund, np.zeros(3))


def test_integrate_window_validation():
    with pytest.raises(ValueError, match="value paths have 3 points, need 5"):
        integrate_window(
            1.0, np.zeros((1, 3)), np.array([1.0]), 0.1, 0.01, np.zeros(5), 5
        )
    with pytest.raises(ValueError, match="noise has 2 increments, need 5"):
        integrate_window(
            1.0, np.zeros((1, 6)), np.array([1.0]), 0.1, 0.01, np.zeros(2), 5
        )


def test_market_config_validation():
    with pytest.raises(ValueError, match="kyle_lambda"):
        MarketConfig(kyle_lambda=0.0)
    with pytest.raises(ValueError, match="noise_sigma"):
        MarketConfig(noise_sigma=-0.1)
    with pytest.raises(ValueError, match="kappa"):
        MarketConfig(kappa=-1.0)
    with pytest.raises(ValueError, match="n_traders"):
        MarketConfig(n_traders=0)
    with pytest.raises(ValueError, match="n_realizations"):
        MarketConfig(n_realizations=0)
    with pytest.raises(ValueError, match="n_windows"):
        MarketConfig(n_windows=0)
    with pytest.raises(ValueError, match="rounds"):
        MarketConfig(rounds=0)


def test_market_config_defaults():
    config = MarketConfig()
    assert config.kyle_lambda == 0.1
    assert config.noise_sigma == 0.1
    assert config.kappa == 1.0
    assert config.n_traders == 3
    assert config.n_realizations == 10
    assert config.n_windows == 5
    assert config.rounds == 5


def ramp_series(n=20):
    rng = np.random.default_rng(12)
    return 1.0 + 0.02 * np.arange(n) + 0.01 * rng.standard_normal(n)


def small_config(**overrides):
    settings = dict(
        n_traders=1, n_realizations=2, n_windows=2, rounds=1, seed=5
    )
    settings.update(overrides)
    return MarketConfig(**settings)


def run_small(series=None, config=None, **kwargs):
    return run_market(
        series if series is not None else ramp_series(),
        config or small_config(),
        calib=CalibConfig(epochs=2, seed=0),
        n_paths=8,
        **kwargs,
    )


def test_run_market_layout():
    series = ramp_series()
    trace = run_small(series)
    assert isinstance(trace, MarketTrace)
    assert trace.prices.shape == series.shape
    assert trace.prices[0] == series[0]
    assert trace.fund_totals.shape == (19,)
    assert trace.noise_terms.shape == (19,)
    assert trace.boundaries == [0, 10]
    np.testing.assert_array_equal(trace.window_of_step, [0] * 9 + [1] * 10)
    assert trace.window_prices(0).size == 10
    assert trace.window_prices(1).size == 10
    np.testing.assert_array_equal(
        np.concatenate([trace.window_prices(0), trace.window_prices(1)]),
        trace.prices,
    )
    assert len(trace.fits) == 2  # n_windows * n_traders
    assert [(f.window, f.trader) for f in trace.fits] == [(0, 0), (1, 0)]
    assert not any(f.fell_back for f in trace.fits)
    assert np.isfinite(trace.prices).all()


def test_run_market_is_reproducible():
    a = run_small()
    b = run_small()
    np.testing.assert_array_equal(a.prices, b.prices)
    np.testing.assert_array_equal(a.fund_totals, b.fund_totals)
    np.testing.assert_array_equal(a.noise_terms, b.noise_terms)
    c = run_small(config=small_config(seed=6))
    assert not np.array_equal(a.prices, c.prices)


def test_run_market_price_steps_reconcile():
    trace = run_small()
    config = small_config()
    # every step is p + lambda*(fund_total*dt + noise); dt varies per window
    # (window 0 fits 10 points -> dt=1/9; window 1 fits window-0 prices, also 10)
    dts = np.where(trace.window_of_step == 0, 1.0 / 9, 1.0 / 9)
    expected = trace.prices[:-1] + config.kyle_lambda * (
        trace.fund_totals * dts + trace.noise_terms
    )
    np.testing.assert_allclose(trace.prices[1:], expected, rtol=0, atol=1e-12)


class ExplodingProposer:
    needs_charts = False

    def critique(self, ctx):
        raise RuntimeError("boom")

    def propose(self, ctx, critique):
        raise RuntimeError("boom")


def test_trader_falls_back_to_previous_window_fit():
    def factory(window, trader):
        return ScriptedProposer() if window == 0 else ExplodingProposer()

    trace = run_small(config=small_config(rounds=2), proposer_factory=factory)
    by_window = {f.window: f for f in trace.fits}
    assert not by_window[0].fell_back
    assert by_window[1].fell_back
    assert by_window[1].model == by_window[0].model
    assert by_window[1].mae == by_window[0].mae


def test_window_zero_failure_propagates():
    with pytest.raises(RuntimeError, match="boom"):
        run_small(
            config=small_config(rounds=2),
            proposer_factory=lambda w, t: ExplodingProposer(),
        )
