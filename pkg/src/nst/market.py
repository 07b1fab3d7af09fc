"""Virtual market: fundamental and noise demand moving a price.

Each fundamental trader group holds a discovered model of the asset's
latent value and demands kappa*(V - P) toward it; a noise group adds
sigma*dW.  Linear impact integrates total demand into the price.  The
five-window harness closes the loop: traders refit once per window on
the previous window's prices, so the market they shape is the market
they next learn from.

Trader belief paths are simulated in the fit window's normalized space
and mapped back through that window's transform; each group's kappa is
split across its realizations so total pressure does not depend on the
realization count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as dn
from .calibrate import CalibConfig, LossSpec
from .data import AffineTransform, normalize
from .discovery import DiscoveryTrace, Proposer, ScriptedProposer, run_discovery
from .dsl import SdeModel, print_model
from .engine import Grid, generate_noise, simulate

DEFAULT_N_WINDOWS = 5


def derive_seed(base: int, *fields: int) -> int:
    """Deterministic child seed for a labeled role under a base seed."""
    ss = np.random.SeedSequence(entropy=[int(base), *[int(f) for f in fields]])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class MarketConfig:
    kyle_lambda: float = 0.1
    noise_sigma: float = 0.1
    kappa: float = 1.0
    n_traders: int = 3
    n_realizations: int = 10
    n_windows: int = DEFAULT_N_WINDOWS
    rounds: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kyle_lambda <= 0:
            raise ValueError("kyle_lambda must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        for name in ("n_traders", "n_realizations", "n_windows", "rounds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True)
class DemandComponents:
    """One step's demand: per-belief-path fundamental terms plus noise."""

    fundamental: np.ndarray
    noise: float

    @property
    def fundamental_total(self) -> float:
        return float(np.sum(self.fundamental))

    @property
    def total(self) -> float:
        return float(np.sum(self.fundamental) + self.noise)


def fundamental_demand(value: float, price: float, kappa: float):
    """kappa * (value - price): demand pushing the price toward the
    trader's believed value."""
    return kappa * (value - price)


def step_price(price: float, components: DemandComponents, kyle_lambda: float, dt: float) -> float:
    """Next price under linear impact: fundamental demand acts over the
    step, noise demand arrives as a finished increment."""
    return price + kyle_lambda * (components.fundamental_total * dt + components.noise)


def split_windows(series: np.ndarray, k: int = DEFAULT_N_WINDOWS) -> list[np.ndarray]:
    """k contiguous equal sections, remainder on the last; concatenating
    them reproduces the input."""
    y = np.asarray(series)
    if k < 1:
        raise ValueError("k must be at least 1")
    if y.size < 2 * k:
        raise ValueError(f"series of {y.size} points is too short for {k} windows")
    base = y.size // k
    edges = [w * base for w in range(k)] + [y.size]
    return [y[edges[w]: edges[w + 1]] for w in range(k)]


def integrate_window(
    p0: float,
    value_paths: np.ndarray,
    kappas: np.ndarray,
    kyle_lambda: float,
    dt: float,
    noise: np.ndarray,
    n_steps: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate the price over one window.

    ``value_paths`` has one row per belief path and at least ``n_steps``
    columns; step k uses column k against the running price.  ``noise``
    holds the noise group's sigma*dW increments, one per step.  Returns
    (prices including p0, so n_steps+1 long; per-step fundamental
    totals; per-step noise).
    """
    paths = np.asarray(value_paths, dtype=float)
    kap = np.broadcast_to(np.asarray(kappas, dtype=float), (paths.shape[0],))
    if paths.shape[1] < n_steps:
        raise ValueError(
            f"value paths have {paths.shape[1]} points, need {n_steps}"
        )
    if noise.size < n_steps:
        raise ValueError(f"noise has {noise.size} increments, need {n_steps}")
    prices = np.empty(n_steps + 1)
    fund_totals = np.empty(n_steps)
    noise_terms = np.empty(n_steps)
    prices[0] = p0
    price = float(p0)
    for k in range(n_steps):
        comp = DemandComponents(
            fundamental=fundamental_demand(paths[:, k], price, kap),
            noise=float(noise[k]),
        )
        fund_totals[k] = comp.fundamental_total
        noise_terms[k] = comp.noise
        price = step_price(price, comp, kyle_lambda, dt)
        prices[k + 1] = price
    return prices, fund_totals, noise_terms


@dataclass
class TraderFit:
    """One trader group's discovery outcome for one window."""

    window: int
    trader: int
    model: SdeModel
    mae: float
    param_count: int
    fell_back: bool = False
    trace: DiscoveryTrace | None = None

    @property
    def model_source(self) -> str:
        return print_model(self.model)


@dataclass
class MarketTrace:
    """Full simulated market: the price path and how it was moved.

    ``prices`` aligns 1:1 with the historical series.  ``window_of_step``
    labels each price with its window; ``boundaries`` holds each
    window's first index.  Step arrays are one shorter than ``prices``:
    step k moved prices[k] to prices[k+1].
    """

    prices: np.ndarray
    fund_totals: np.ndarray
    noise_terms: np.ndarray
    window_of_step: np.ndarray
    boundaries: list[int]
    fits: list[TraderFit] = field(default_factory=list)

    def window_prices(self, w: int) -> np.ndarray:
        edges = self.boundaries + [self.prices.size]
        return self.prices[edges[w]: edges[w + 1]]


def _fit_window_traders(
    fit_series: np.ndarray,
    window: int,
    config: MarketConfig,
    proposer_factory,
    previous: list[TraderFit] | None,
    calib: CalibConfig | None,
    loss_spec: LossSpec | None,
    n_paths: int,
) -> tuple[list[TraderFit], AffineTransform]:
    """Discover one model per trader group on the fit series.

    A trader whose discovery run fails outright falls back to its fit
    from the previous window; if every trader is new and the series is
    degenerate, the error propagates.
    """
    norm = normalize(fit_series)
    fits: list[TraderFit] = []
    for trader in range(config.n_traders):
        base_calib = calib or CalibConfig()
        trader_calib = CalibConfig(
            epochs=base_calib.epochs,
            lr0=base_calib.lr0,
            lr_decay=base_calib.lr_decay,
            decay_every=base_calib.decay_every,
            clip_threshold=base_calib.clip_threshold,
            grad_step=base_calib.grad_step,
            seed=derive_seed(config.seed, window, trader, 1),
        )
        try:
            trace = run_discovery(
                norm.values,
                proposer_factory(window, trader),
                config.rounds,
                calib=trader_calib,
                loss_spec=loss_spec,
                n_paths=n_paths,
            )
            best = trace.best_round()
            fits.append(
                TraderFit(
                    window=window,
                    trader=trader,
                    model=best.model,
                    mae=best.mae,
                    param_count=best.param_count,
                    trace=trace,
                )
            )
        except Exception:
            if previous is None:
                raise
            prior = previous[trader]
            fits.append(
                TraderFit(
                    window=window,
                    trader=trader,
                    model=prior.model,
                    mae=prior.mae,
                    param_count=prior.param_count,
                    fell_back=True,
                )
            )
    return fits, norm.transform


def run_market(
    series: np.ndarray,
    config: MarketConfig | None = None,
    proposer_factory=None,
    *,
    calib: CalibConfig | None = None,
    loss_spec: LossSpec | None = None,
    n_paths: int = 100,
) -> MarketTrace:
    """Simulate the closed loop over the whole series.

    Window 0's traders learn from that window's historical section; each
    later window's traders learn from the previous window's simulated
    prices.  The price starts at the first historical value and is
    continuous across windows.  ``proposer_factory(window, trader)``
    supplies each discovery run's proposer; the default is a scripted
    proposer for every seat.
    """
    config = config or MarketConfig()
    y = np.asarray(series, dtype=float)
    sections = split_windows(y, config.n_windows)
    if proposer_factory is None:
        proposer_factory = lambda window, trader: ScriptedProposer()

    boundaries: list[int] = []
    offset = 0
    for sec in sections:
        boundaries.append(offset)
        offset += sec.size

    prices = np.empty(y.size)
    fund_totals = np.empty(y.size - 1)
    noise_terms = np.empty(y.size - 1)
    window_of_step = np.empty(y.size - 1, dtype=int)
    all_fits: list[TraderFit] = []

    fit_series = sections[0]
    previous_fits: list[TraderFit] | None = None
    price_cursor = float(y[0])
    write = 0
    step_write = 0
    for w, section in enumerate(sections):
        fits, transform = _fit_window_traders(
            fit_series, w, config, proposer_factory, previous_fits,
            calib, loss_spec, n_paths,
        )
        all_fits.extend(fits)

        dt = 1.0 / (fit_series.size - 1)
        n_steps = section.size - 1 if w == 0 else section.size
        sim_grid = Grid(max(n_steps, 1), dt)
        x0_norm = float(transform.normalize(np.array([price_cursor]))[0])

        value_paths = np.empty((config.n_traders * config.n_realizations, n_steps + 1))
        for trader, fit in enumerate(fits):
            panel = generate_noise(
                derive_seed(config.seed, w, trader, 2),
                config.n_realizations,
                sim_grid,
                fit.model.n_drivers,
            )
            ens = simulate(
                fit.model, fit.model.param_values, x0_norm, sim_grid, panel
            )
            raw = transform.denormalize(np.asarray(dn.value_of(ens.values)))
            lo = trader * config.n_realizations
            value_paths[lo: lo + config.n_realizations] = raw[:, : n_steps + 1]

        rng = np.random.Generator(
            np.random.Philox(derive_seed(config.seed, w, 0, 0))
        )
        noise = config.noise_sigma * rng.normal(0.0, np.sqrt(dt), n_steps)
        kappas = np.full(
            value_paths.shape[0], config.kappa / config.n_realizations
        )
        win_prices, win_fund, win_noise = integrate_window(
            price_cursor, value_paths, kappas, config.kyle_lambda, dt, noise, n_steps
        )

        keep = win_prices if w == 0 else win_prices[1:]
        prices[write: write + keep.size] = keep
        write += keep.size
        fund_totals[step_write: step_write + n_steps] = win_fund
        noise_terms[step_write: step_write + n_steps] = win_noise
        window_of_step[step_write: step_write + n_steps] = w
        step_write += n_steps

        price_cursor = float(win_prices[-1])
        fit_series = keep
        previous_fits = fits

    return MarketTrace(
        prices=prices,
        fund_totals=fund_totals,
        noise_terms=noise_terms,
        window_of_step=window_of_step,
        boundaries=boundaries,
        fits=all_fits,
    )
