"""Command-line surface: calibrate, discover, market, validate.

Each experiment command assembles an ExperimentConfig from an optional
JSON config file plus flags (flags win), runs it, and prints a short
outcome; the full record lands in the output directory.  `validate`
checks a model file and reports every issue the parser and validator
find.
"""

from __future__ import annotations

import json
import sys

import click

from .config import ExperimentConfig, config_from_dict
from .dsl import ParseError, parse_model, validate_model
from .experiments import run_experiment


def _assemble(
    kind: str,
    config_path: str | None,
    flags: dict,
    defaults: dict | None = None,
) -> ExperimentConfig:
    """Config file < command defaults < explicit flags."""
    base: dict = {}
    if config_path is not None:
        with open(config_path, encoding="utf-8") as fh:
            base = json.load(fh)
    base["kind"] = kind
    for key, value in (defaults or {}).items():
        base.setdefault(key, value)
    market_keys = {
        "windows": "n_windows",
        "traders": "n_traders",
        "realizations": "n_realizations",
    }
    for key, value in flags.items():
        if value is None:
            continue
        if key in market_keys:
            market = dict(base.get("market") or {})
            market[market_keys[key]] = value
            base["market"] = market
        else:
            base[key] = value
    try:
        return config_from_dict(base)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(str(exc)) from exc


@click.group()
def main() -> None:
    """Neuro-symbolic trading experiments."""


@main.command()
@click.option("--data", required=True, help="CSV path or synthetic:gbm:mu,sigma,seed")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, help="output directory")
@click.option("--seed", type=int, default=None)
def calibrate(data, model, config_path, out, seed) -> None:
    """Fit a model file's parameters to a price series."""
    config = _assemble(
        "calibrate",
        config_path,
        {"data": data, "model": model, "out": out, "seed": seed},
    )
    summary = run_experiment(config)
    click.echo(f"final MAE {summary['final_mae']:.6f}")
    click.echo(f"theta {summary['theta']}")
    click.echo(f"written to {summary['out']}")


@main.command()
@click.option("--data", required=True)
@click.option("--proposer", type=click.Choice(["scripted", "vlm"]), default=None)
@click.option("--mode", type=click.Choice(["standard", "parsimonious"]), default=None)
@click.option("--domain", default=None, help='asset and period, e.g. "gold, 2023"')
@click.option("--rounds", type=int, default=None, show_default="5")
@click.option("--trials", type=int, default=None, show_default="3")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None)
@click.option("--seed", type=int, default=None)
def discover(data, proposer, mode, domain, rounds, trials, config_path, out, seed) -> None:
    """Run iterative model discovery on a price series."""
    flags = {
        "data": data,
        "proposer": proposer,
        "mode": mode,
        "domain": domain,
        "rounds": rounds,
        "trials": trials,
        "out": out,
        "seed": seed,
    }
    config = _assemble("discover", config_path, flags, defaults={"trials": 3})
    summary = run_experiment(config)
    for trial in summary["trials"]:
        click.echo(
            f"trial {trial['trial']}: round0 MAE {trial['round0_mae']:.6f} "
            f"-> final MAE {trial['final_mae']:.6f} "
            f"({trial['final_param_count']} params, "
            f"{trial['failure_count']} failed rounds)"
        )
    click.echo(f"written to {summary['out']}")


@main.command()
@click.option("--data", required=True)
@click.option("--windows", type=int, default=None, show_default="5")
@click.option("--traders", type=int, default=None, show_default="3")
@click.option("--realizations", type=int, default=None, show_default="10")
@click.option("--rounds", type=int, default=None, show_default="5")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None)
@click.option("--seed", type=int, default=None)
def market(data, windows, traders, realizations, rounds, config_path, out, seed) -> None:
    """Run the closed-loop virtual market on a price series."""
    config = _assemble(
        "market",
        config_path,
        {
            "data": data,
            "windows": windows,
            "traders": traders,
            "realizations": realizations,
            "rounds": rounds,
            "out": out,
            "seed": seed,
        },
    )
    summary = run_experiment(config)
    click.echo(
        f"historical variance {summary['historical_variance']:.6f}, "
        f"simulated variance {summary['simulated_variance']:.6f}"
    )
    click.echo(f"written to {summary['out']}")


@main.command()
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
def validate(model) -> None:
    """Parse and validate a model file; exit nonzero on any error."""
    with open(model, encoding="utf-8") as fh:
        source = fh.read()
    try:
        parsed = parse_model(source)
    except ParseError as exc:
        click.echo(f"parse error: {exc}")
        sys.exit(1)
    report = validate_model(parsed)
    for issue in report.warnings:
        click.echo(f"WARNING {issue.code}: {issue.message}")
    for issue in report.errors:
        click.echo(f"ERROR {issue.code}: {issue.message}")
    if not report.ok:
        sys.exit(1)
    click.echo(
        f"ok: {len(parsed.equations)} equation(s), {len(parsed.params)} parameter(s)"
    )


if __name__ == "__main__":
    main()
