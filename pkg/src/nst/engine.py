"""Euler-Maruyama simulation of parsed SDE models.

Noise generation and integration are strictly separated: a
:class:`NoisePanel` freezes every random draw for a run up front, and
:func:`simulate` is a deterministic (and, via dual numbers,
differentiable) function of the model parameters given that panel.  The
same panel can therefore be reused across calibration epochs, making the
moment-matching loss a smooth deterministic function of the parameters
(the common-random-numbers construction).

Noise panels are generated with numpy's Philox counter-based generator,
which is seed-stable across platforms.  The Brownian block is drawn in
one C-ordered ``standard_normal((n_paths, n_steps, n_drivers))`` call
(path-major, step-minor, driver-innermost), then the jump uniforms and
jump normals, in that order; this draw order is part of the
reproducibility contract.

Paths whose next value would be non-finite or exceed
:data:`DIVERGENCE_LIMIT` in magnitude are frozen at their last finite
value and flagged; frozen paths never contribute to ensemble moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dual as dn
from .dsl import SdeModel, eval_expr

DIVERGENCE_LIMIT = 1e6

#: Engine defaults shared by calibration and synthetic data generation.
DEFAULT_DT = 0.01
DEFAULT_N_STEPS = 100
DEFAULT_N_PATHS = 100
DEFAULT_X0 = 1.0


class AllPathsDivergedError(RuntimeError):
    """Every path in an ensemble diverged; no moments can be computed."""


@dataclass(frozen=True)
class Grid:
    """Uniform time grid: ``n_steps`` steps of width ``dt`` from ``t0``."""

    n_steps: int
    dt: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError("grid needs at least one step")
        if not (self.dt > 0.0):
            raise ValueError("grid dt must be positive")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @classmethod
    def for_series(cls, n_points: int) -> "Grid":
        """Grid matching an observed series: n-1 steps spanning [0, 1]."""
        if n_points < 2:
            raise ValueError("a series grid needs at least two points")
        return cls(n_steps=n_points - 1, dt=1.0 / (n_points - 1))


@dataclass(eq=False)
class NoisePanel:
    """Pre-drawn randomness for one simulation run.

    ``brownian`` holds N(0, dt) increments with shape
    (n_paths, n_steps, n_drivers); ``jump_uniforms`` and ``jump_normals``
    hold the thinning uniforms and jump-size normals, shape
    (n_paths, n_steps) each.
    """

    seed: int
    dt: float
    brownian: np.ndarray
    jump_uniforms: np.ndarray
    jump_normals: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.brownian.shape[0]

    @property
    def n_steps(self) -> int:
        return self.brownian.shape[1]

    @property
    def n_drivers(self) -> int:
        return self.brownian.shape[2]


def generate_noise(
    seed: int, n_paths: int, grid: Grid, n_drivers: int = 1
) -> NoisePanel:
    """Draw a reproducible noise panel for ``n_paths`` paths on ``grid``."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    if n_drivers < 1:
        raise ValueError("need at least one Brownian driver")
    rng = np.random.Generator(np.random.Philox(seed))
    brownian = rng.standard_normal((n_paths, grid.n_steps, n_drivers)) * np.sqrt(grid.dt)
    jump_uniforms = rng.random((n_paths, grid.n_steps))
    jump_normals = rng.standard_normal((n_paths, grid.n_steps))
    return NoisePanel(seed, grid.dt, brownian, jump_uniforms, jump_normals)


@dataclass(eq=False)
class PathEnsemble:
    """Simulated paths: ``values`` has shape (n_paths, n_steps + 1).

    ``values`` (and ``aux_values`` for two-equation models) are plain
    arrays for float parameters, or Duals carrying tangents when the
    simulation ran in derivative mode.  ``diverged`` marks frozen paths.
    """

    values: "np.ndarray | dn.Dual"
    diverged: np.ndarray
    grid: Grid
    aux_values: "np.ndarray | dn.Dual | None" = None

    @property
    def n_paths(self) -> int:
        return np.shape(dn.value_of(self.values))[0]

    def mean_path(self) -> np.ndarray:
        """Pointwise mean of the non-diverged paths (primal values)."""
        vals = np.asarray(dn.value_of(self.values))
        keep = ~self.diverged
        if not keep.any():
            raise AllPathsDivergedError("all paths diverged")
        return vals[keep].mean(axis=0)


@dataclass(frozen=True)
class MomentVector:
    """First four moments of a series: mean, population std, skewness,
    and (non-excess) kurtosis.  A constant series has m2 = m3 = m4 = 0 by
    convention.  Components are floats, or Duals in derivative mode."""

    m1: object
    m2: object
    m3: object
    m4: object

    def as_array(self) -> np.ndarray:
        return np.array(
            [dn.value_of(self.m1), dn.value_of(self.m2),
             dn.value_of(self.m3), dn.value_of(self.m4)],
            dtype=float,
        )

    def components(self) -> tuple:
        return (self.m1, self.m2, self.m3, self.m4)


def simulate(
    model: SdeModel,
    params: Sequence,
    x0: "float | tuple[float, float]",
    grid: Grid,
    noise: NoisePanel,
) -> PathEnsemble:
    """Integrate ``model`` over ``grid`` with the draws in ``noise``.

    ``params`` follows ``model.params`` order and may contain floats or
    Duals.  ``x0`` is the initial value of V, or a (V, aux) pair for
    two-equation models (the auxiliary state defaults to 0.1 otherwise).

    The jump indicator compares a pre-drawn uniform against
    ``clip(intensity*dt, 0, 1)`` using primal values only; intensity
    gradients do not flow through the indicator (that non-smoothness is
    why jump models with parameter-dependent intensity are calibrated
    with finite differences).
    """
    if len(params) != len(model.params):
        raise ValueError(
            f"model has {len(model.params)} parameters, got {len(params)} values"
        )
    if noise.n_steps != grid.n_steps:
        raise ValueError("noise panel does not match the grid step count")
    if abs(noise.dt - grid.dt) > 1e-15:
        raise ValueError("noise panel was drawn for a different dt")
    if noise.n_drivers < model.n_drivers:
        raise ValueError(
            f"model needs {model.n_drivers} Brownian drivers, panel has {noise.n_drivers}"
        )

    n_paths = noise.n_paths
    two_eq = len(model.equations) > 1
    if isinstance(x0, tuple):
        v_init, a_init = float(x0[0]), float(x0[1])
    else:
        v_init, a_init = float(x0), 0.1

    env_base = {p.name: value for p, value in zip(model.params, params)}
    state = np.full(n_paths, v_init)
    aux = np.full(n_paths, a_init) if two_eq else None
    alive = np.ones(n_paths, dtype=bool)
    diverged = np.zeros(n_paths, dtype=bool)

    values = [state]
    aux_values = [aux] if two_eq else None

    for k in range(grid.n_steps):
        env = dict(env_base)
        env["V"] = state
        env["t"] = grid.t0 + k * grid.dt
        if two_eq:
            env[model.equations[1].state] = aux

        new_states = []
        for eq in model.equations:
            cur = state if eq.state == "V" else aux
            incr = dn.multiply(eval_expr(eq.drift, env), grid.dt)
            nxt = dn.add(cur, incr)
            if eq.diffusion is not None:
                g = eval_expr(eq.diffusion, env)
                nxt = dn.add(nxt, dn.multiply(g, noise.brownian[:, k, eq.driver - 1]))
            if eq.jump is not None:
                intensity = dn.value_of(eval_expr(eq.jump.intensity, env))
                prob = np.clip(np.asarray(intensity, dtype=float) * grid.dt, 0.0, 1.0)
                fired = (noise.jump_uniforms[:, k] < prob).astype(float)
                size = dn.add(
                    eval_expr(eq.jump.mean, env),
                    dn.multiply(eval_expr(eq.jump.std, env), noise.jump_normals[:, k]),
                )
                nxt = dn.add(nxt, dn.multiply(fired, size))
            new_states.append(nxt)

        primal = np.asarray(dn.value_of(new_states[0]), dtype=float)
        good = np.isfinite(primal) & (np.abs(primal) <= DIVERGENCE_LIMIT)
        if two_eq:
            aux_primal = np.asarray(dn.value_of(new_states[1]), dtype=float)
            good &= np.isfinite(aux_primal) & (np.abs(aux_primal) <= DIVERGENCE_LIMIT)

        update = alive & good
        diverged |= alive & ~good
        alive = update

        state = dn.where(update, new_states[0], state)
        values.append(state)
        if two_eq:
            aux = dn.where(update, new_states[1], aux)
            aux_values.append(aux)

    stacked = dn.stack_last(values)
    stacked_aux = dn.stack_last(aux_values) if two_eq else None
    return PathEnsemble(stacked, diverged, grid, stacked_aux)


def _series_stats(x) -> tuple:
    """Four moment components over the trailing axis, with the
    zero-variance convention applied elementwise on the primal."""
    m1 = dn.mean_last(x)
    centered = dn.subtract(x, dn.expand_last(m1))
    sq = dn.multiply(centered, centered)
    m2 = dn.sqrt(dn.mean_last(sq))
    flat = np.asarray(dn.value_of(m2)) == 0.0
    ones = np.ones_like(np.asarray(dn.value_of(m2), dtype=float))
    denom = dn.where(flat, ones, m2)
    d2 = dn.multiply(denom, denom)
    m3_raw = dn.divide(dn.mean_last(dn.multiply(sq, centered)), dn.multiply(d2, denom))
    m4_raw = dn.divide(dn.mean_last(dn.multiply(sq, sq)), dn.multiply(d2, d2))
    zero = np.zeros_like(np.asarray(dn.value_of(m1), dtype=float))
    m3 = dn.where(flat, zero, m3_raw)
    m4 = dn.where(flat, zero, m4_raw)
    return m1, m2, m3, m4


def moments(series: np.ndarray) -> MomentVector:
    """Moment vector of a single observed series (length >= 2)."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1:
        raise ValueError("moments expects a one-dimensional series")
    if arr.shape[0] < 2:
        raise ValueError("moments needs at least two observations")
    m1, m2, m3, m4 = _series_stats(arr)
    return MomentVector(float(m1), float(m2), float(m3), float(m4))


def ensemble_moments(ensemble: PathEnsemble) -> MomentVector:
    """Average of per-path moment vectors over the non-diverged paths.

    Each surviving path contributes the moments of its own trajectory;
    the ensemble statistic is their mean.  Raises
    :class:`AllPathsDivergedError` when nothing survived.
    """
    keep = ~ensemble.diverged
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise AllPathsDivergedError("all paths diverged")
    weights = keep.astype(float) / n_keep
    parts = _series_stats(ensemble.values)
    averaged = tuple(dn.sum_last(dn.multiply(p, weights)) for p in parts)
    if not isinstance(ensemble.values, dn.Dual):
        averaged = tuple(float(a) for a in averaged)
    return MomentVector(*averaged)
