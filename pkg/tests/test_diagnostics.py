"""Residual statistics against constructed series with known structure."""

import numpy as np
import pytest

from nst.diagnostics import (
    Diagnostics,
    level_vol_correlation,
    mean_reversion_slope,
    periodogram_peak,
    residual_diagnostics,
    residual_kurtosis,
)
from nst.dsl import parse_model
from nst.engine import Grid, generate_noise, simulate


def test_slope_recovers_ar1_coefficient():
    # y_{k+1} = y_k + theta*(m - y_k)*h exactly, so dy = -theta*h*y + const
    theta, m, h = 5.0, 0.5, 0.01
    y = [2.0]
    for _ in range(200):
        y.append(y[-1] + theta * (m - y[-1]) * h)
    slope = mean_reversion_slope(np.array(y))
    assert slope == pytest.approx(-theta * h, rel=1e-9)


def test_slope_zero_for_pure_drift():
    y = 1.0 + 0.03 * np.arange(100)
    rng = np.random.default_rng(0)
    noisy = y + 1e-9 * rng.standard_normal(100)
    assert abs(mean_reversion_slope(noisy)) < 1e-6


def test_slope_constant_series_is_zero():
    assert mean_reversion_slope(np.full(50, 2.0)) == 0.0


def test_periodogram_finds_planted_frequency():
    t = np.linspace(0.0, 1.0, 100, endpoint=False)
    r = np.sin(2 * np.pi * 8.0 * t)
    ratio, freq = periodogram_peak(r, dt=t[1] - t[0])
    assert freq == pytest.approx(8.0, abs=0.5)
    assert ratio > 100.0


def test_periodogram_white_noise_is_flat():
    rng = np.random.default_rng(3)
    ratio, _ = periodogram_peak(rng.standard_normal(512), dt=0.01)
    assert ratio < 30.0


def test_periodogram_short_series_sentinel():
    ratio, freq = periodogram_peak(np.arange(15, dtype=float), dt=0.1)
    assert (ratio, freq) == (1.0, 0.0)


def test_periodogram_constant_residual_uses_floor():
    ratio, freq = periodogram_peak(np.full(64, 1.3), dt=0.01)
    assert np.isfinite(ratio)
    assert freq >= 0.0


def test_level_vol_positive_for_proportional_noise():
    rng = np.random.default_rng(5)
    gbm = parse_model("dV = mu*V dt + sigma*V dW\n")
    grid = Grid(400, 1.0 / 400)
    path = np.asarray(
        simulate(gbm, [0.5, 0.3], 1.0, grid, generate_noise(5, 1, grid)).values
    )[0]
    corr = level_vol_correlation(path)
    assert corr > 0.2


def test_level_vol_zero_for_regular_ramp():
    assert level_vol_correlation(1.0 + 0.01 * np.arange(100)) == 0.0


def test_level_vol_zero_for_constant_series():
    assert level_vol_correlation(np.full(40, 1.5)) == 0.0


def test_level_vol_additive_noise_is_small():
    rng = np.random.default_rng(6)
    y = np.cumsum(0.02 * rng.standard_normal(2000)) + 5.0
    assert abs(level_vol_correlation(y)) < 0.1


def test_residual_kurtosis_gaussian_near_three():
    rng = np.random.default_rng(7)
    r = np.cumsum(rng.standard_normal(5000))
    assert residual_kurtosis(r) == pytest.approx(3.0, abs=0.3)


def test_residual_kurtosis_jumpy_is_heavy():
    rng = np.random.default_rng(8)
    incr = rng.standard_normal(2000) * 0.01
    spikes = rng.random(2000) < 0.01
    incr[spikes] += 1.0
    r = np.cumsum(incr)
    assert residual_kurtosis(r) > 4.0


def test_residual_kurtosis_short_series_is_zero():
    assert residual_kurtosis(np.array([1.0, 2.0])) == 0.0
    assert residual_kurtosis(np.array([1.0])) == 0.0


def test_residual_diagnostics_bundle():
    gbm = parse_model("dV = mu*V dt + sigma*V dW\n")
    grid = Grid(99, 1.0 / 99)
    noise = generate_noise(11, 20, grid)
    ens = simulate(gbm, [0.05, 0.2], 1.0, grid, noise)
    t = grid.times()
    series = ens.mean_path() + 0.05 * np.sin(2 * np.pi * 6.0 * t)
    d = residual_diagnostics(series, ens)
    assert isinstance(d, Diagnostics)
    assert d.dominant_frequency == pytest.approx(6.0, abs=1.0)
    assert d.periodicity_ratio > 3.0
    keys = set(d.as_dict())
    assert keys == {
        "mean_reversion_slope",
        "periodicity_ratio",
        "dominant_frequency",
        "level_vol_correlation",
        "residual_kurtosis",
    }


def test_residual_diagnostics_shape_mismatch():
    gbm = parse_model("dV = mu*V dt + sigma*V dW\n")
    grid = Grid(50, 0.02)
    ens = simulate(gbm, [0.05, 0.2], 1.0, grid, generate_noise(1, 3, grid))
    with pytest.raises(ValueError, match="points"):
        residual_diagnostics(np.zeros(10), ens)
