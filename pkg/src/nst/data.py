"""Price-series ingestion, normalization, and synthetic data.

CSV input is a plain "date,close" table; rows are sorted by date,
duplicates rejected, and missing calendar days are treated as simply
absent: the series is a uniformly indexed sequence of observations, so
daily data with weekend gaps needs no filling.

Normalization is min-max to [0, 1] on both axes, with the transform
retained so fitted output can be mapped back to price space.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from . import dual as dn
from .dsl import parse_model
from .dsl.catalog import GBM_SOURCE
from .engine import DEFAULT_DT, DEFAULT_N_STEPS, Grid, generate_noise, simulate


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[str, ...]
    values: np.ndarray
    asset: str = ""
    period: str = ""

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class AffineTransform:
    """Min-max record mapping raw values to [0, 1] and back."""

    y_min: float
    y_max: float
    t_min: float = 0.0
    t_max: float = 1.0

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.y_min) / (
            self.y_max - self.y_min
        )

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * (self.y_max - self.y_min) + self.y_min

    def as_dict(self) -> dict[str, float]:
        return {
            "y_min": self.y_min,
            "y_max": self.y_max,
            "t_min": self.t_min,
            "t_max": self.t_max,
        }


@dataclass(frozen=True)
class NormalizedSeries:
    values: np.ndarray
    transform: AffineTransform

    def __len__(self) -> int:
        return len(self.values)


class DataError(ValueError):
    """Malformed or degenerate input data."""


def load_csv(path: str) -> PriceSeries:
    """Read a "date,close" file; extra columns are ignored.

    Rows come back sorted by date.  Duplicate dates, unparseable dates
    or prices, and non-positive prices are errors, reported with their
    line number.
    """
    rows: list[tuple[date, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["date", "close"]:
            raise DataError(f"{path}: expected header starting 'date,close'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected at least 2 columns")
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad date {row[0]!r}") from None
            try:
                close = float(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad price {row[1]!r}") from None
            if close <= 0:
                raise DataError(f"{path}:{lineno}: non-positive price {close}")
            rows.append((day, close))
    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise DataError(f"{path}: duplicate date {a.isoformat()}")
    return PriceSeries(
        dates=tuple(r[0].isoformat() for r in rows),
        values=np.asarray([r[1] for r in rows], dtype=float),
        asset=path,
    )


def normalize(values: "np.ndarray | PriceSeries") -> NormalizedSeries:
    """Min-max scale to [0, 1]; the transform is kept for inversion.

    A constant series has no scale and is rejected: its moments would
    degenerate to the trivial convention and fitting is meaningless.
    """
    if isinstance(values, PriceSeries):
        values = values.values
    y = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise DataError("need a one-dimensional series with >= 2 points")
    lo, hi = float(y.min()), float(y.max())
    if hi <= lo:
        raise DataError("constant series cannot be normalized")
    transform = AffineTransform(y_min=lo, y_max=hi)
    return NormalizedSeries(values=transform.normalize(y), transform=transform)


def denormalize(norm: NormalizedSeries) -> np.ndarray:
    return norm.transform.denormalize(norm.values)


def synthesize_gbm(
    mu: float, sigma: float, seed: int, grid: Grid | None = None
) -> PriceSeries:
    """One GBM path from x0=1, labeled as synthetic.

    Dates are a synthetic daily sequence so the result is
    interchangeable with loaded files.
    """
    grid = grid or Grid(DEFAULT_N_STEPS, DEFAULT_DT)
    model = parse_model(GBM_SOURCE).with_param_values([float(mu), float(sigma)])
    noise = generate_noise(seed, 1, grid)
    values = np.asarray(
        dn.value_of(simulate(model, model.param_values, 1.0, grid, noise).values)
    )[0]
    start = date(2000, 1, 1)
    return PriceSeries(
        dates=tuple(
            (start + timedelta(days=k)).isoformat() for k in range(values.size)
        ),
        values=values,
        asset=f"synthetic:gbm:{mu},{sigma},{seed}",
        period="synthetic",
    )


def parse_data_spec(spec: str) -> PriceSeries:
    """A --data argument: a CSV path or "synthetic:gbm:mu,sigma,seed"."""
    if spec.startswith("synthetic:"):
        parts = spec.split(":")
        if len(parts) != 3 or parts[1] != "gbm":
            raise DataError(
                f"unknown synthetic spec {spec!r}; expected synthetic:gbm:mu,sigma,seed"
            )
        fields = parts[2].split(",")
        if len(fields) != 3:
            raise DataError(
                f"synthetic:gbm needs 'mu,sigma,seed', got {parts[2]!r}"
            )
        try:
            mu, sigma = float(fields[0]), float(fields[1])
            seed = int(fields[2])
        except ValueError:
            raise DataError(f"bad synthetic spec numbers in {spec!r}") from None
        return synthesize_gbm(mu, sigma, seed)
    return load_csv(spec)
