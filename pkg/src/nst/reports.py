"""Report emission: the files a run leaves behind.

Every CSV and JSON here is written deterministically, with canonical
JSON (sorted keys, two-space indent, trailing newline), fixed column
orders, and repr-based float formatting, so identical runs produce
byte-identical
trees.  The one intentionally varying field, the manifest's wall time,
is isolated in its own key.

Non-finite floats have no JSON representation; they are emitted as
null rather than as the invalid bare tokens json.dumps would produce.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time

import numpy as np

from . import __version__
from .calibrate import CalibrationResult
from .config import ExperimentConfig, config_hash, to_canonical_json
from .discovery import DiscoveryTrace
from .dsl import print_model
from .market import MarketTrace


def jsonable(value):
    """Recursively convert to plain JSON types; non-finite floats
    become null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def canonical_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: str, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))


def _fmt(x: float) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def write_manifest(
    outdir: str, config: ExperimentConfig, wall_time: float
) -> str:
    path = os.path.join(outdir, "run_manifest.json")
    write_json(
        path,
        {
            "config": config.to_dict(),
            "config_hash": config_hash(config),
            "seed": config.seed,
            "version": f"nst-{__version__}",
            "wall_time_seconds": float(wall_time),
        },
    )
    return path


def emit_calibration(outdir: str, result: CalibrationResult) -> None:
    """calibration.csv (one row per epoch) plus result.json."""
    os.makedirs(outdir, exist_ok=True)
    with open(
        os.path.join(outdir, "calibration.csv"), "w", newline="", encoding="utf-8"
    ) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "lr", "loss", "grad_norm"])
        for rec in result.epoch_log:
            writer.writerow(
                [rec.epoch, _fmt(rec.lr), _fmt(rec.loss), _fmt(rec.grad_norm)]
            )
    summary = {
        "theta": result.theta,
        "final_mae": result.final_mae,
        "n_diverged_epochs": result.n_diverged_epochs,
        "best_epoch": int(np.argmin(result.loss_trace)),
        "best_loss": float(np.min(result.loss_trace)),
    }
    if result.sim_moments is not None:
        summary["sim_moments"] = [float(c) for c in result.sim_moments.components()]
    if result.target_moments is not None:
        summary["target_moments"] = [
            float(c) for c in result.target_moments.components()
        ]
    write_json(os.path.join(outdir, "result.json"), summary)


def emit_discovery(outdir: str, trace: DiscoveryTrace) -> None:
    """round_<i>/ directories plus the trace.json summary.

    Charts are rendered during the run (the proposer may need them);
    this writes everything else: each round's model text and epoch log,
    and the per-round summary with failure flags.
    """
    rounds = []
    for rec in trace.rounds:
        rdir = os.path.join(outdir, f"round_{rec.round_index}")
        os.makedirs(rdir, exist_ok=True)
        with open(os.path.join(rdir, "model.sde"), "w", encoding="utf-8") as fh:
            fh.write(print_model(rec.model))
        emit_calibration(rdir, rec.result)
        rounds.append(
            {
                "round": rec.round_index,
                "mae": rec.mae,
                "param_count": rec.param_count,
                "failed": rec.failed,
                "failure_reason": rec.failure_reason,
                "rationale": rec.proposal.rationale if rec.proposal else None,
                "critique": rec.critique.text if rec.critique else None,
            }
        )
    best = trace.best_round()
    write_json(
        os.path.join(outdir, "trace.json"),
        {
            "rounds": rounds,
            "failure_count": trace.failure_count,
            "best_round": best.round_index,
            "best_mae": best.mae,
            "best_mae_sequence": trace.best_mae_sequence(),
        },
    )


def emit_market(outdir: str, trace: MarketTrace, historical: np.ndarray) -> None:
    """market_trace.csv, summary.json, and the comparison chart."""
    from .charts import render_market_chart

    os.makedirs(outdir, exist_ok=True)
    with open(
        os.path.join(outdir, "market_trace.csv"), "w", newline="", encoding="utf-8"
    ) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "window", "P", "Q_fund_total", "Q_noise"])
        for k in range(trace.fund_totals.size):
            writer.writerow(
                [
                    k,
                    int(trace.window_of_step[k]),
                    _fmt(trace.prices[k + 1]),
                    _fmt(trace.fund_totals[k]),
                    _fmt(trace.noise_terms[k]),
                ]
            )
    n_windows = len(trace.boundaries)
    summary = {
        "initial_price": float(trace.prices[0]),
        "historical_variance": float(np.var(np.asarray(historical, dtype=float))),
        "simulated_variance": float(np.var(trace.prices)),
        "window_boundaries": list(trace.boundaries),
        "windows": [
            {
                "window": w,
                "variance": float(np.var(trace.window_prices(w))),
                "traders": [
                    {
                        "trader": f.trader,
                        "mae": f.mae,
                        "param_count": f.param_count,
                        "fell_back": f.fell_back,
                        "model": f.model_source,
                    }
                    for f in trace.fits
                    if f.window == w
                ],
            }
            for w in range(n_windows)
        ],
    }
    write_json(os.path.join(outdir, "summary.json"), summary)
    render_market_chart(
        np.asarray(historical, dtype=float),
        trace.prices,
        trace.boundaries,
        os.path.join(outdir, "comparison.png"),
    )


class Stopwatch:
    def __init__(self) -> None:
        self.started = time.monotonic()

    def elapsed(self) -> float:
        return time.monotonic() - self.started
