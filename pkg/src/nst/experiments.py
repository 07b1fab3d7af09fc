"""Experiment orchestration: a config in, a directory of results out.

One entry point dispatches on the experiment kind.  Discovery trials
fan out on a thread pool with per-trial seeds derived by offset from
the experiment seed, each writing its own subdirectory; the merged
summary and the manifest land at the top level.  The resolved config is
persisted alongside, so any finished run can be repeated from its own
output directory.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .calibrate import calibrate
from .config import ExperimentConfig, save_config
from .data import normalize, parse_data_spec
from .discovery import DiscoveryTrace, ScriptedProposer, run_discovery
from .dsl import parse_model, print_model, require_valid
from .market import run_market
from .prompts import default_template
from .reports import (
    Stopwatch,
    emit_calibration,
    emit_discovery,
    emit_market,
    write_json,
    write_manifest,
)


def _load_model(path: str):
    with open(path, encoding="utf-8") as fh:
        model = parse_model(fh.read())
    require_valid(model)
    return model


def _make_proposer(config: ExperimentConfig, trace_dir: str | None):
    if config.proposer == "scripted":
        return ScriptedProposer(mode=config.mode)
    from .vlm import VlmClient, VlmProposer

    template = default_template(config.mode, config.domain)
    return VlmProposer(
        client=VlmClient(config.vlm),
        template=template,
        trace_dir=trace_dir,
    )


def _run_calibrate(config: ExperimentConfig, outdir: str) -> dict:
    series = parse_data_spec(config.data)
    norm = normalize(series)
    model = _load_model(config.model)
    calib = replace(config.calib, seed=config.seed)
    result = calibrate(
        model, norm.values, calib, config.loss, n_paths=config.n_paths
    )
    emit_calibration(outdir, result)
    fitted = model.with_param_values(result.theta.tolist())
    with open(os.path.join(outdir, "model.sde"), "w", encoding="utf-8") as fh:
        fh.write(print_model(fitted))
    return {
        "final_mae": result.final_mae,
        "theta": result.theta.tolist(),
        "n_diverged_epochs": result.n_diverged_epochs,
    }


def _run_one_trial(
    config: ExperimentConfig, values: np.ndarray, trial: int, outdir: str
) -> DiscoveryTrace:
    trial_dir = os.path.join(outdir, f"trial_{trial}")
    os.makedirs(trial_dir, exist_ok=True)
    calib = replace(config.calib, seed=config.seed + trial)
    proposer = _make_proposer(config, trial_dir)
    trace = run_discovery(
        values,
        proposer,
        config.rounds,
        template=default_template(config.mode, config.domain),
        calib=calib,
        loss_spec=config.loss,
        chart_dir=trial_dir,
        n_paths=config.n_paths,
    )
    emit_discovery(trial_dir, trace)
    return trace


def _run_discover(config: ExperimentConfig, outdir: str) -> dict:
    series = parse_data_spec(config.data)
    norm = normalize(series)
    traces: list[DiscoveryTrace | None] = [None] * config.trials
    if config.trials == 1:
        traces[0] = _run_one_trial(config, norm.values, 0, outdir)
    else:
        with ThreadPoolExecutor(max_workers=min(config.trials, 4)) as pool:
            futures = {
                pool.submit(
                    _run_one_trial, config, norm.values, trial, outdir
                ): trial
                for trial in range(config.trials)
            }
            for future, trial in futures.items():
                traces[trial] = future.result()
    trials = []
    for trial, trace in enumerate(traces):
        best = trace.best_round()
        final = trace.rounds[-1]
        trials.append(
            {
                "trial": trial,
                "seed": config.seed + trial,
                "round0_mae": trace.rounds[0].mae,
                "final_mae": final.mae,
                "final_param_count": final.param_count,
                "best_mae": best.mae,
                "best_round": best.round_index,
                "failure_count": trace.failure_count,
            }
        )
    summary = {"trials": trials}
    write_json(os.path.join(outdir, "summary.json"), summary)
    return summary


def _run_market_experiment(config: ExperimentConfig, outdir: str) -> dict:
    series = parse_data_spec(config.data)
    market_config = replace(
        config.market, seed=config.seed, rounds=config.rounds
    )
    if config.proposer == "vlm":
        factory = lambda window, trader: _make_proposer(
            config, os.path.join(outdir, f"window_{window}", f"trader_{trader}")
        )
    else:
        factory = lambda window, trader: ScriptedProposer(mode=config.mode)
    trace = run_market(
        series.values,
        market_config,
        factory,
        calib=config.calib,
        loss_spec=config.loss,
        n_paths=config.n_paths,
    )
    emit_market(outdir, trace, series.values)
    return {
        "historical_variance": float(np.var(series.values)),
        "simulated_variance": float(np.var(trace.prices)),
        "windows": market_config.n_windows,
    }


def run_experiment(config: ExperimentConfig) -> dict:
    """Run ``config`` to completion and write its output directory.

    Returns the same summary the run persisted, with the output
    directory added.
    """
    watch = Stopwatch()
    outdir = config.out
    os.makedirs(outdir, exist_ok=True)
    save_config(config, os.path.join(outdir, "config.json"))
    if config.kind == "calibrate":
        summary = _run_calibrate(config, outdir)
    elif config.kind == "discover":
        summary = _run_discover(config, outdir)
    else:
        summary = _run_market_experiment(config, outdir)
    write_manifest(outdir, config, watch.elapsed())
    summary = dict(summary)
    summary["out"] = outdir
    return summary
