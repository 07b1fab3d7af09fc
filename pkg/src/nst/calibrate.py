"""Moment-matching calibration by gradient descent.

The loss compares the first four moments of a simulated ensemble against
the moments of an observed series, as a weighted mean absolute error
plus a small L2 penalty on the parameters.  All randomness is frozen in
one noise panel per run (common random numbers), so the loss is a
deterministic function of the parameters and can be differentiated by
forward-mode dual numbers pushed through the whole simulation.  A
central-finite-difference route exists alongside the dual route: the two
must agree on smooth models, and models with a parameter-dependent jump
indicator (where the dual route is blind to the discontinuity) fall back
to finite differences.

The update rule is plain gradient descent with global-norm clipping and
a staircase learning-rate decay; the returned parameters are the best
iterate by recorded loss, not the last one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import dual as dn
from .dsl import SdeModel, require_valid
from .dsl.nodes import Param, StateVar, iter_subexprs
from .engine import (
    AllPathsDivergedError,
    DEFAULT_N_PATHS,
    Grid,
    MomentVector,
    NoisePanel,
    ensemble_moments,
    generate_noise,
    moments,
    simulate,
)

DEFAULT_WEIGHTS = (0.35, 0.35, 0.15, 0.15)


@dataclass(frozen=True)
class LossSpec:
    """Loss shape: per-moment weights, L2 strength, divergence penalty."""

    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    l2: float = 1e-5
    divergence_penalty: float = 1e3

    def __post_init__(self) -> None:
        if len(self.weights) != 4:
            raise ValueError("need exactly four moment weights")
        if any(w < 0 for w in self.weights):
            raise ValueError("moment weights must be non-negative")
        if sum(self.weights) <= 0:
            raise ValueError("at least one moment weight must be positive")
        if self.l2 < 0:
            raise ValueError("l2 strength must be non-negative")


@dataclass(frozen=True)
class CalibConfig:
    """Optimizer settings.  The seed fixes the run's noise panel."""

    epochs: int = 100
    lr0: float = 0.05
    lr_decay: float = 0.9
    decay_every: int = 10
    clip_threshold: float = 5.0
    grad_step: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not (0 < self.lr_decay <= 1):
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be at least 1")
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be positive")
        if self.grad_step <= 0:
            raise ValueError("grad_step must be positive")


class EpochRecord(NamedTuple):
    epoch: int
    lr: float
    loss: float
    grad_norm: float


@dataclass
class CalibrationResult:
    """Outcome of one calibration run.

    ``theta`` is the best iterate by recorded loss; ``final_mae`` is the
    unweighted four-moment MAE at that iterate (reported separately from
    the weighted training loss), infinite if even the best iterate
    diverged everywhere.
    """

    theta: np.ndarray
    loss_trace: np.ndarray
    final_mae: float
    n_diverged_epochs: int
    epoch_log: list[EpochRecord] = field(default_factory=list)
    sim_moments: MomentVector | None = None
    target_moments: MomentVector | None = None


def moment_mae(
    sim: MomentVector,
    target: MomentVector,
    weights: Sequence[float] | None = None,
):
    """Weighted mean absolute error between two moment vectors.

    Unweighted by default.  Generic over Duals in ``sim``.
    """
    if weights is None:
        w = (1.0, 1.0, 1.0, 1.0)
    else:
        w = tuple(float(x) for x in weights)
    total = sum(w)
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    acc = None
    for wi, s, t in zip(w, sim.components(), target.components()):
        term = dn.multiply(wi, dn.absolute(dn.subtract(s, dn.value_of(t))))
        acc = term if acc is None else dn.add(acc, term)
    return dn.divide(acc, total)


def _l2_term(params: Sequence, strength: float):
    acc = 0.0
    for p in params:
        acc = dn.add(acc, dn.multiply(p, p))
    return dn.multiply(strength, acc)


def _loss_value(
    model: SdeModel,
    params: Sequence,
    target: MomentVector,
    spec: LossSpec,
    noise: NoisePanel,
    grid: Grid,
    x0: float,
):
    """Loss plus a flag marking the all-paths-diverged penalty branch."""
    ensemble = simulate(model, params, x0, grid, noise)
    try:
        sim_mv = ensemble_moments(ensemble)
    except AllPathsDivergedError:
        return dn.add(spec.divergence_penalty, _l2_term(params, 1.0)), True
    value = moment_mae(sim_mv, target, spec.weights)
    if spec.l2 > 0:
        value = dn.add(value, _l2_term(params, spec.l2))
    return value, False


def loss(
    model: SdeModel,
    params: Sequence,
    target: MomentVector,
    spec: LossSpec,
    noise: NoisePanel,
    grid: Grid,
    x0: float,
):
    """Scalar calibration loss (a Dual when ``params`` carry tangents)."""
    value, _ = _loss_value(model, params, target, spec, noise, grid, x0)
    return value


def dual_safe(model: SdeModel) -> bool:
    """True when forward-mode gradients see every parameter dependence.

    A jump indicator compares a uniform draw against intensity*dt, which
    is a step function of anything the intensity depends on.  Intensities
    built from constants and time only are fine; any parameter or state
    reference sends the model down the finite-difference route.
    """
    for eq in model.equations:
        if eq.jump is None:
            continue
        for node in iter_subexprs(eq.jump.intensity):
            if isinstance(node, (Param, StateVar)):
                return False
    return True


def gradient(
    model: SdeModel,
    params: Sequence[float],
    target: MomentVector,
    spec: LossSpec,
    noise: NoisePanel,
    grid: Grid,
    x0: float,
    method: str = "auto",
    step: float = 1e-4,
) -> np.ndarray:
    """Gradient of :func:`loss` with respect to ``params``.

    ``method`` is "dual", "fd", or "auto" (dual when the model is smooth
    in its parameters, finite differences otherwise).  ``step`` is the
    relative half-width of the central differences.
    """
    theta = np.asarray(params, dtype=float)
    if method == "auto":
        method = "dual" if dual_safe(model) else "fd"
    if method == "dual":
        value, _ = _loss_value(
            model, dn.Dual.seed(theta.tolist()), target, spec, noise, grid, x0
        )
        if isinstance(value, dn.Dual):
            return np.asarray(value.tan, dtype=float)
        return np.zeros_like(theta)
    if method == "fd":
        grad = np.zeros_like(theta)
        for i in range(theta.size):
            h = step * max(1.0, abs(theta[i]))
            up = theta.copy()
            up[i] += h
            down = theta.copy()
            down[i] -= h
            lu, _ = _loss_value(model, up, target, spec, noise, grid, x0)
            ld, _ = _loss_value(model, down, target, spec, noise, grid, x0)
            grad[i] = (float(dn.value_of(lu)) - float(dn.value_of(ld))) / (2 * h)
        return grad
    raise ValueError(f"unknown gradient method {method!r}")


def fit_moments(
    model: SdeModel,
    target: MomentVector,
    config: CalibConfig,
    spec: LossSpec | None = None,
    *,
    grid: Grid,
    x0: float,
    n_paths: int = DEFAULT_N_PATHS,
) -> CalibrationResult:
    """Fit ``model``'s parameters to a precomputed moment target.

    Each epoch evaluates the loss and gradient at the current iterate,
    records them, then takes a clipped gradient step; the best recorded
    iterate is returned.  One noise panel, drawn from ``config.seed``, is
    shared by every epoch, so the loss surface is frozen for the whole
    run.
    """
    require_valid(model)
    spec = spec or LossSpec()
    start = float(x0)
    noise = generate_noise(config.seed, n_paths, grid, model.n_drivers)

    theta = np.asarray(model.param_values, dtype=float)
    use_dual = dual_safe(model)

    loss_trace = np.empty(config.epochs)
    epoch_log: list[EpochRecord] = []
    iterates = np.empty((config.epochs, theta.size))
    n_diverged = 0

    for epoch in range(config.epochs):
        lr = config.lr0 * config.lr_decay ** (epoch // config.decay_every)
        iterates[epoch] = theta
        if use_dual and theta.size > 0:
            value, all_diverged = _loss_value(
                model, dn.Dual.seed(theta.tolist()), target, spec, noise, grid, start
            )
            loss_now = float(dn.value_of(value))
            grad = (
                np.asarray(value.tan, dtype=float)
                if isinstance(value, dn.Dual)
                else np.zeros_like(theta)
            )
        else:
            value, all_diverged = _loss_value(
                model, theta, target, spec, noise, grid, start
            )
            loss_now = float(dn.value_of(value))
            grad = gradient(
                model, theta, target, spec, noise, grid, start,
                method="fd", step=config.grad_step,
            ) if theta.size else np.zeros(0)

        if all_diverged:
            n_diverged += 1
        loss_trace[epoch] = loss_now
        grad_norm = float(np.linalg.norm(grad))
        epoch_log.append(EpochRecord(epoch, lr, loss_now, grad_norm))

        step = grad
        if grad_norm > config.clip_threshold:
            step = grad * (config.clip_threshold / grad_norm)
        theta = theta - lr * step

    best = int(np.argmin(loss_trace))
    best_theta = iterates[best]

    final_mae = math.inf
    sim_mv: MomentVector | None = None
    try:
        ens = simulate(model, best_theta, start, grid, noise)
        sim_mv = ensemble_moments(ens)
        final_mae = float(dn.value_of(moment_mae(sim_mv, target)))
    except AllPathsDivergedError:
        pass

    return CalibrationResult(
        theta=best_theta,
        loss_trace=loss_trace,
        final_mae=final_mae,
        n_diverged_epochs=n_diverged,
        epoch_log=epoch_log,
        sim_moments=sim_mv,
        target_moments=target,
    )


def calibrate(
    model: SdeModel,
    target_series: np.ndarray,
    config: CalibConfig,
    spec: LossSpec | None = None,
    *,
    n_paths: int = DEFAULT_N_PATHS,
    x0: float | None = None,
) -> CalibrationResult:
    """Fit ``model``'s parameters to the moments of ``target_series``.

    The series is expected to be normalized to [0, 1]; simulation starts
    at its first value (override with ``x0``) on a grid spanning [0, 1]
    with one step per observation gap.
    """
    series = np.asarray(target_series, dtype=float)
    if series.ndim != 1 or series.size < 2:
        raise ValueError("target series must be one-dimensional with >= 2 points")
    return fit_moments(
        model,
        moments(series),
        config,
        spec,
        grid=Grid.for_series(series.size),
        x0=float(series[0]) if x0 is None else float(x0),
        n_paths=n_paths,
    )
