"""Iterative model discovery: critique, propose, calibrate, repeat.

Round 0 fits the starting model.  Every later round examines the best
fit so far, asks a proposer for a revised equation, and fits that.  The
proposer sits behind a small interface so a deterministic rule cascade
and an external vision-model adapter are interchangeable; whatever the
proposer does, the loop records exactly one entry per round and carries
the previous model through any failure, so a trace always comes back
complete.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .calibrate import CalibConfig, CalibrationResult, LossSpec, calibrate
from .charts import render_fit_chart
from .diagnostics import Diagnostics, residual_diagnostics
from .dsl import (
    ModelValidationError,
    ParseError,
    SdeModel,
    catalog,
    parse_model,
    print_model,
    require_valid,
)
from .engine import (
    DEFAULT_N_PATHS,
    Grid,
    PathEnsemble,
    generate_noise,
    simulate,
)

SMALL_PARAM_THRESHOLD = 1e-3


class ProposerError(RuntimeError):
    """A proposer failed to produce usable output for one round."""


@dataclass(frozen=True)
class TriggerThresholds:
    """Cut-offs deciding which structural defect a diagnostic implies."""

    mean_reversion_slope: float = -0.05
    level_vol_correlation: float = 0.3
    periodicity_ratio: float = 3.0
    residual_kurtosis: float = 4.0


@dataclass(frozen=True)
class Critique:
    """Evaluation of the current fit: free text plus the local numbers
    it was grounded in."""

    text: str
    diagnostics: Diagnostics


@dataclass(frozen=True)
class ModelProposal:
    dsl_source: str
    rationale: str


@dataclass(frozen=True)
class RoundContext:
    """Everything a proposer may look at when writing its critique and
    proposal for one round.

    ``history`` is the fitted model of every previous round in order;
    ``reference`` is the best of them by recorded error, the fit the
    critique should be about.  ``chart_path`` points at the rendered
    reference fit and is None when chart output is disabled.
    """

    series: np.ndarray
    history: tuple[SdeModel, ...]
    reference: SdeModel
    reference_result: CalibrationResult
    diagnostics: Diagnostics
    round_index: int
    chart_path: str | None = None
    template: object | None = None


class Proposer(Protocol):
    needs_charts: bool

    def critique(self, ctx: RoundContext) -> Critique: ...

    def propose(self, ctx: RoundContext, critique: Critique) -> ModelProposal: ...


@dataclass
class RoundRecord:
    """One discovery round: the model it ended with and how it got it.

    On failure the model, result, and MAE are carried from the previous
    round, ``failed`` is set, and the reason says what went wrong.
    """

    round_index: int
    model: SdeModel
    mae: float
    result: CalibrationResult
    critique: Critique | None = None
    proposal: ModelProposal | None = None
    chart_path: str | None = None
    failed: bool = False
    failure_reason: str | None = None

    @property
    def param_count(self) -> int:
        return len(self.model.params)


@dataclass
class DiscoveryTrace:
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def failure_count(self) -> int:
        return sum(1 for r in self.rounds if r.failed)

    def best_round(self) -> RoundRecord:
        return min(self.rounds, key=lambda r: (r.mae, r.round_index))

    def best_mae_sequence(self) -> list[float]:
        out, best = [], float("inf")
        for r in self.rounds:
            best = min(best, r.mae)
            out.append(best)
        return out


def _critique_text(diag: Diagnostics, thresholds: TriggerThresholds) -> str:
    """Deterministic critique naming each triggered signal."""
    parts: list[str] = []
    if diag.mean_reversion_slope < thresholds.mean_reversion_slope:
        parts.append(
            f"increments regress on levels with slope "
            f"{diag.mean_reversion_slope:.3f}, so excursions are pulled back"
        )
    if diag.level_vol_correlation > thresholds.level_vol_correlation:
        parts.append(
            f"increment size correlates with the level "
            f"(r={diag.level_vol_correlation:.2f})"
        )
    if diag.periodicity_ratio > thresholds.periodicity_ratio:
        parts.append(
            f"the residual spectrum has a dominant peak "
            f"({diag.periodicity_ratio:.1f}x median) near frequency "
            f"{diag.dominant_frequency:.2f}"
        )
    if diag.residual_kurtosis > thresholds.residual_kurtosis:
        parts.append(
            f"residual increments are heavy-tailed "
            f"(kurtosis {diag.residual_kurtosis:.1f})"
        )
    if not parts:
        return "The fit leaves no strong structure in the residuals."
    return "The fit misses structure: " + "; ".join(parts) + "."


def scripted_propose(
    history: Sequence[SdeModel],
    diagnostics: Diagnostics,
    mode: str = "standard",
    *,
    base: SdeModel | None = None,
    thresholds: TriggerThresholds | None = None,
) -> ModelProposal:
    """Deterministic one-term revision of the latest (or given) model.

    The cascade tries, in order: mean-reversion drift, sqrt-of-state
    diffusion, a sinusoidal drift term at the residual's dominant
    frequency, a jump term, and a time-scaled diffusion factor; each
    fires only when its diagnostic exceeds the threshold and the term is
    not already present.  Exhausted, it returns the model unchanged with
    rationale "no change".  In parsimonious mode a calibrated parameter
    near zero is removed before any growth is considered.
    """
    if not history:
        raise ValueError("history must hold at least one model")
    if mode not in ("standard", "parsimonious"):
        raise ValueError(f"unknown proposer mode {mode!r}")
    th = thresholds or TriggerThresholds()
    model = base if base is not None else history[-1]

    if mode == "parsimonious":
        for decl in model.params:
            if abs(decl.value) < SMALL_PARAM_THRESHOLD:
                pruned = catalog.remove_param_term(model, decl.name)
                if pruned is not None:
                    return ModelProposal(
                        print_model(pruned),
                        f"drop the {decl.name} term, its calibrated value "
                        f"{decl.value:.1e} is negligible",
                    )

    # new terms start inert (zero weight) so the revised model reproduces
    # the base fit exactly at epoch 0; with the round's shared noise panel
    # the calibrated result can then never be worse than the base
    d = diagnostics
    if (
        d.mean_reversion_slope < th.mean_reversion_slope
        and not catalog.has_mean_reversion(model)
    ):
        revised = catalog.add_mean_reversion(model, 0.0, 0.5)
        return ModelProposal(
            print_model(revised), "add a mean-reversion drift term"
        )
    if (
        d.level_vol_correlation > th.level_vol_correlation
        and catalog.diffusion_is_state_free(model)
    ):
        revised = catalog.sqrt_scale_diffusion(model)
        return ModelProposal(
            print_model(revised), "scale the diffusion by sqrt of the state"
        )
    if d.periodicity_ratio > th.periodicity_ratio and not catalog.has_sinusoid(model):
        freq = d.dominant_frequency if d.dominant_frequency > 0 else 1.0
        revised = catalog.add_sinusoid(model, 0.0, freq, 0.0)
        return ModelProposal(
            print_model(revised),
            f"add a sinusoidal drift term near frequency {freq:.2f}",
        )
    if d.residual_kurtosis > th.residual_kurtosis and not catalog.has_jump(model):
        revised = catalog.add_jump(model, 0.1, 0.0, 0.0)
        return ModelProposal(print_model(revised), "add a jump term")
    if not catalog.has_time_scaled_diffusion(model):
        revised = catalog.time_scale_diffusion(model, 0.0)
        return ModelProposal(
            print_model(revised), "let the diffusion scale change over time"
        )
    return ModelProposal(print_model(model), "no change")


@dataclass
class ScriptedProposer:
    """Rule-cascade proposer; never fails, never needs a chart."""

    mode: str = "standard"
    thresholds: TriggerThresholds = field(default_factory=TriggerThresholds)
    needs_charts: bool = False

    def critique(self, ctx: RoundContext) -> Critique:
        return Critique(
            _critique_text(ctx.diagnostics, self.thresholds), ctx.diagnostics
        )

    def propose(self, ctx: RoundContext, critique: Critique) -> ModelProposal:
        return scripted_propose(
            ctx.history,
            critique.diagnostics,
            self.mode,
            base=ctx.reference,
            thresholds=self.thresholds,
        )


def _fit_ensemble(
    model: SdeModel,
    theta: np.ndarray,
    series: np.ndarray,
    calib: CalibConfig,
    n_paths: int,
) -> PathEnsemble:
    grid = Grid.for_series(series.size)
    noise = generate_noise(calib.seed, n_paths, grid, model.n_drivers)
    return simulate(model, theta, float(series[0]), grid, noise)


def run_discovery(
    series: np.ndarray,
    proposer: Proposer,
    rounds: int,
    template: object | None = None,
    calib: CalibConfig | None = None,
    *,
    loss_spec: LossSpec | None = None,
    chart_dir: str | None = None,
    start_model: SdeModel | None = None,
    n_paths: int = DEFAULT_N_PATHS,
) -> DiscoveryTrace:
    """Run ``rounds`` rounds of discovery on a normalized series.

    Every round calibrates with the same config, so the recorded errors
    share one noise panel and are directly comparable.  A proposer or
    parse/validation failure marks the round failed and carries the
    previous round's model, so the trace always has ``rounds`` entries
    and the best error so far never increases.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    series = np.asarray(series, dtype=float)
    calib = calib or CalibConfig()
    if proposer.needs_charts and chart_dir is None:
        raise ValueError("this proposer reads charts; chart_dir is required")

    def chart_for(index: int, model: SdeModel, theta: np.ndarray) -> str | None:
        if chart_dir is None:
            return None
        ens = _fit_ensemble(model, theta, series, calib, n_paths)
        path = os.path.join(chart_dir, f"round_{index}", "chart.png")
        return render_fit_chart(series, ens, path)

    start = start_model or parse_model(catalog.GBM_SOURCE)
    require_valid(start)
    trace = DiscoveryTrace()

    result = calibrate(start, series, calib, loss_spec, n_paths=n_paths)
    fitted = start.with_param_values(result.theta.tolist())
    trace.rounds.append(
        RoundRecord(
            round_index=0,
            model=fitted,
            mae=result.final_mae,
            result=result,
            chart_path=chart_for(0, fitted, result.theta),
        )
    )

    for index in range(1, rounds):
        best = trace.best_round()
        ensemble = _fit_ensemble(
            best.model, best.result.theta, series, calib, n_paths
        )
        diag = residual_diagnostics(series, ensemble)
        ctx = RoundContext(
            series=series,
            history=tuple(r.model for r in trace.rounds),
            reference=best.model,
            reference_result=best.result,
            diagnostics=diag,
            round_index=index,
            chart_path=best.chart_path,
            template=template,
        )
        try:
            critique = proposer.critique(ctx)
            proposal = proposer.propose(ctx, critique)
            model = parse_model(proposal.dsl_source)
            require_valid(model)
        except (ProposerError, ParseError, ModelValidationError) as exc:
            prev = trace.rounds[-1]
            trace.rounds.append(
                RoundRecord(
                    round_index=index,
                    model=prev.model,
                    mae=prev.mae,
                    result=prev.result,
                    critique=None,
                    proposal=None,
                    chart_path=prev.chart_path,
                    failed=True,
                    failure_reason=str(exc),
                )
            )
            continue

        result = calibrate(model, series, calib, loss_spec, n_paths=n_paths)
        fitted = model.with_param_values(result.theta.tolist())
        trace.rounds.append(
            RoundRecord(
                round_index=index,
                model=fitted,
                mae=result.final_mae,
                result=result,
                critique=critique,
                proposal=proposal,
                chart_path=chart_for(index, fitted, result.theta),
            )
        )
    return trace
