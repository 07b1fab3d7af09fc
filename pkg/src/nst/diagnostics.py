"""Residual statistics that drive model critique.

Four signals, each tied to one structural defect a critic can name:
a negative slope of increments against levels points at mean reversion,
a spiked periodogram at seasonality, increment size growing with the
level at state-dependent diffusion, and heavy-tailed residual increments
at jumps.  All are computed locally from the historical series and the
fitted ensemble's mean path, so they are available whether the critique
text comes from a scripted rule or an external model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import PathEnsemble, moments

PERIODOGRAM_MIN_POINTS = 16
_MEDIAN_FLOOR = 1e-12


@dataclass(frozen=True)
class Diagnostics:
    """Structured residual statistics for one fitted model."""

    mean_reversion_slope: float
    periodicity_ratio: float
    dominant_frequency: float
    level_vol_correlation: float
    residual_kurtosis: float

    def as_dict(self) -> dict[str, float]:
        return {
            "mean_reversion_slope": self.mean_reversion_slope,
            "periodicity_ratio": self.periodicity_ratio,
            "dominant_frequency": self.dominant_frequency,
            "level_vol_correlation": self.level_vol_correlation,
            "residual_kurtosis": self.residual_kurtosis,
        }


def mean_reversion_slope(series: np.ndarray) -> float:
    """OLS slope of one-step increments on levels; negative means
    excursions tend to be pulled back."""
    y = np.asarray(series, dtype=float)
    dy = np.diff(y)
    level = y[:-1]
    var = np.var(level)
    if var == 0.0:
        return 0.0
    cov = np.mean((level - level.mean()) * (dy - dy.mean()))
    return float(cov / var)


def periodogram_peak(residual: np.ndarray, dt: float) -> tuple[float, float]:
    """(max power / median power, frequency of the max) over the
    demeaned residual's one-sided periodogram, zero bin excluded.

    Series shorter than 16 points return (1.0, 0.0): too few bins to
    call anything a peak.
    """
    r = np.asarray(residual, dtype=float)
    if r.size < PERIODOGRAM_MIN_POINTS:
        return 1.0, 0.0
    power = np.abs(np.fft.rfft(r - r.mean())) ** 2
    freqs = np.fft.rfftfreq(r.size, d=dt)
    power, freqs = power[1:], freqs[1:]
    median = max(float(np.median(power)), _MEDIAN_FLOOR)
    peak = int(np.argmax(power))
    return float(power[peak] / median), float(freqs[peak])


def level_vol_correlation(series: np.ndarray) -> float:
    """Pearson correlation of |increment| with the level it started
    from; 0 when either side is degenerate."""
    y = np.asarray(series, dtype=float)
    size = np.abs(np.diff(y))
    level = y[:-1]
    # rounding noise on a perfectly regular ramp is not volatility
    if np.std(size) <= 1e-12 or np.std(level) <= 1e-12:
        return 0.0
    return float(np.corrcoef(size, level)[0, 1])


def residual_kurtosis(residual: np.ndarray) -> float:
    """Kurtosis of the residual's increments, in the same non-excess
    convention the moment loss uses (Gaussian increments sit near 3)."""
    dr = np.diff(np.asarray(residual, dtype=float))
    if dr.size < 2:
        return 0.0
    return float(moments(dr).m4)


def residual_diagnostics(series: np.ndarray, ensemble: PathEnsemble) -> Diagnostics:
    """Diagnostics for ``series`` against a fitted ensemble.

    The residual is the series minus the ensemble's mean path, so the
    periodicity and kurtosis signals describe what the fit failed to
    absorb, while slope and level-vol describe the raw series itself.
    """
    y = np.asarray(series, dtype=float)
    fit = ensemble.mean_path()
    if y.shape != fit.shape:
        raise ValueError(
            f"series has {y.size} points but the ensemble paths have {fit.size}"
        )
    r = y - fit
    ratio, freq = periodogram_peak(r, ensemble.grid.dt)
    return Diagnostics(
        mean_reversion_slope=mean_reversion_slope(y),
        periodicity_ratio=ratio,
        dominant_frequency=freq,
        level_vol_correlation=level_vol_correlation(y),
        residual_kurtosis=residual_kurtosis(r),
    )
