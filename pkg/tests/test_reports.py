"""Deterministic report files, config round-trips, and chart output."""

import json
import os

import numpy as np
import pytest
from PIL import Image

from nst.calibrate import CalibConfig, fit_moments
from nst.config import (
    ExperimentConfig,
    config_from_dict,
    config_hash,
    load_config,
    save_config,
    to_canonical_json,
)
from nst.charts import render_fit_chart, render_market_chart
from nst.discovery import ScriptedProposer, run_discovery
from nst.dsl import parse_model
from nst.engine import Grid, MomentVector, generate_noise, simulate
from nst.market import MarketConfig, run_market
from nst.reports import (
    canonical_json,
    emit_calibration,
    emit_discovery,
    emit_market,
    jsonable,
    write_json,
    write_manifest,
)

GBM = parse_model("param mu = 0.05\nparam sigma = 0.2\ndV = mu*V dt + sigma*V dW\n")


def test_jsonable_plain_types_pass_through():
    assert jsonable({"a": 1, "b": "x", "c": None}) == {"a": 1, "b": "x", "c": None}
    assert jsonable([1, (2, 3)]) == [1, [2, 3]]


def test_jsonable_numpy_types():
    out = jsonable({"arr": np.array([1.5, 2.5]), "n": np.int64(7), "f": np.float64(0.25)})
    assert out == {"arr": [1.5, 2.5], "n": 7, "f": 0.25}
    assert isinstance(out["n"], int) and isinstance(out["f"], float)


def test_jsonable_nonfinite_to_null():
    out = jsonable({"a": float("nan"), "b": float("inf"), "c": -np.inf, "d": 1.0})
    assert out == {"a": None, "b": None, "c": None, "d": 1.0}
    text = canonical_json([np.nan])
    assert "NaN" not in text and "null" in text


def test_canonical_json_layout():
    text = canonical_json({"b": 1, "a": 2})
    assert text == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_write_json_creates_directories(tmp_path):
    path = tmp_path / "deep" / "nested" / "out.json"
    write_json(str(path), {"k": 1})
    assert json.loads(path.read_text()) == {"k": 1}


def small_calibration():
    grid = Grid(20, 0.05)
    target = MomentVector(1.0, 0.1, 0.0, 3.0)
    return fit_moments(
        GBM, target, CalibConfig(epochs=4, seed=1), grid=grid, x0=1.0, n_paths=10
    )


def test_emit_calibration_layout(tmp_path):
    result = small_calibration()
    emit_calibration(str(tmp_path), result)
    csv_text = (tmp_path / "calibration.csv").read_text()
    lines = csv_text.splitlines()
    assert lines[0] == "epoch,lr,loss,grad_norm"
    assert len(lines) == 5  # header + 4 epochs
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == repr(0.05)
    assert float(first[2]) == pytest.approx(result.loss_trace[0])
    summary = json.loads((tmp_path / "result.json").read_text())
    assert set(summary) >= {
        "theta", "final_mae", "n_diverged_epochs", "best_epoch", "best_loss",
    }
    assert summary["theta"] == list(result.theta)
    assert summary["best_epoch"] == int(np.argmin(result.loss_trace))
    assert summary["sim_moments"] == [float(c) for c in result.sim_moments.components()]


def test_emit_calibration_is_byte_deterministic(tmp_path):
    result = small_calibration()
    a, b = tmp_path / "a", tmp_path / "b"
    emit_calibration(str(a), result)
    emit_calibration(str(b), result)
    assert (a / "calibration.csv").read_bytes() == (b / "calibration.csv").read_bytes()
    assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()


def quick_trace():
    grid = Grid(39, 1.0 / 39)
    series = np.asarray(
        simulate(GBM, [0.05, 0.2], 0.5, grid, generate_noise(3, 1, grid)).values
    )[0]
    return run_discovery(
        series, ScriptedProposer(), rounds=2,
        calib=CalibConfig(epochs=2, seed=2), n_paths=8,
    )


def test_emit_discovery_layout(tmp_path):
    trace = quick_trace()
    emit_discovery(str(tmp_path), trace)
    for index in range(2):
        rdir = tmp_path / f"round_{index}"
        assert (rdir / "model.sde").exists()
        assert (rdir / "calibration.csv").exists()
        assert (rdir / "result.json").exists()
        parse_model((rdir / "model.sde").read_text())  # round-trips
    summary = json.loads((tmp_path / "trace.json").read_text())
    assert summary["failure_count"] == trace.failure_count
    assert summary["best_round"] == trace.best_round().round_index
    assert summary["best_mae_sequence"] == trace.best_mae_sequence()
    assert len(summary["rounds"]) == 2
    assert summary["rounds"][0]["rationale"] is None
    assert summary["rounds"][1]["rationale"] is not None


def quick_market():
    rng = np.random.default_rng(9)
    series = 1.0 + 0.02 * np.arange(20) + 0.01 * rng.standard_normal(20)
    config = MarketConfig(
        n_traders=1, n_realizations=2, n_windows=2, rounds=1, seed=4
    )
    trace = run_market(
        series, config, calib=CalibConfig(epochs=2, seed=0), n_paths=8
    )
    return series, trace


def test_emit_market_layout(tmp_path):
    series, trace = quick_market()
    emit_market(str(tmp_path), trace, series)
    lines = (tmp_path / "market_trace.csv").read_text().splitlines()
    assert lines[0] == "step,window,P,Q_fund_total,Q_noise"
    assert len(lines) == 20  # header + 19 steps
    row0 = lines[1].split(",")
    assert row0[0] == "0" and row0[1] == "0"
    assert float(row0[2]) == pytest.approx(trace.prices[1])
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["initial_price"] == trace.prices[0]
    assert summary["historical_variance"] == pytest.approx(np.var(series))
    assert summary["simulated_variance"] == pytest.approx(np.var(trace.prices))
    assert summary["window_boundaries"] == [0, 10]
    assert len(summary["windows"]) == 2
    assert summary["windows"][0]["traders"][0]["model"].startswith("param")
    assert (tmp_path / "comparison.png").exists()


def test_emit_market_is_byte_deterministic(tmp_path):
    series, trace = quick_market()
    a, b = tmp_path / "a", tmp_path / "b"
    emit_market(str(a), trace, series)
    emit_market(str(b), trace, series)
    for name in ("market_trace.csv", "summary.json", "comparison.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def base_config(**overrides):
    settings = dict(kind="discover", data="synthetic:gbm:0.05,0.2,1", out="runs/x")
    settings.update(overrides)
    return ExperimentConfig(**settings)


def test_config_round_trip_is_byte_identical(tmp_path):
    config = base_config(seed=7, trials=2)
    path = tmp_path / "config.json"
    save_config(config, str(path))
    first = path.read_bytes()
    reloaded = load_config(str(path))
    save_config(reloaded, str(path))
    assert path.read_bytes() == first
    assert reloaded == config


def test_config_hash_ignores_out_only():
    a = base_config(out="runs/a")
    b = base_config(out="runs/b")
    assert config_hash(a) == config_hash(b)
    c = base_config(seed=99)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 64


def test_config_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys: bogus"):
        config_from_dict(
            {"kind": "discover", "data": "d", "bogus": 1}
        )
    with pytest.raises(ValueError, match="unknown calib keys: lr"):
        config_from_dict(
            {"kind": "discover", "data": "d", "calib": {"lr": 0.1}}
        )
    with pytest.raises(ValueError, match="unknown market keys"):
        config_from_dict(
            {"kind": "market", "data": "d", "market": {"impact": 2}}
        )


def test_config_nested_sections_build_dataclasses():
    config = config_from_dict(
        {
            "kind": "market",
            "data": "d",
            "calib": {"epochs": 7},
            "loss": {"weights": [1, 1, 1, 1]},
            "market": {"n_traders": 2},
        }
    )
    assert config.calib.epochs == 7
    assert config.loss.weights == (1.0, 1.0, 1.0, 1.0)
    assert config.market.n_traders == 2


def test_config_validation_errors():
    with pytest.raises(ValueError, match="unknown experiment kind"):
        base_config(kind="train")
    with pytest.raises(ValueError, match="unknown proposer"):
        base_config(proposer="llm")
    with pytest.raises(ValueError, match="unknown mode"):
        base_config(mode="fancy")
    with pytest.raises(ValueError, match="need a model file"):
        base_config(kind="calibrate")
    with pytest.raises(ValueError, match="vlm config section"):
        base_config(proposer="vlm")
    with pytest.raises(ValueError, match="at least 1"):
        base_config(trials=0)


def test_to_dict_serializes_weights_as_list():
    data = base_config().to_dict()
    assert data["loss"]["weights"] == [0.35, 0.35, 0.15, 0.15]
    json.dumps(data)  # fully serializable


def test_write_manifest_contents(tmp_path):
    config = base_config(out=str(tmp_path))
    path = write_manifest(str(tmp_path), config, 1.25)
    manifest = json.loads(open(path).read())
    assert set(manifest) == {
        "config", "config_hash", "seed", "version", "wall_time_seconds",
    }
    assert manifest["version"] == "nst-0.1.0"
    assert manifest["wall_time_seconds"] == 1.25
    assert manifest["config_hash"] == config_hash(config)
    assert manifest["config"]["kind"] == "discover"


def test_fit_chart_renders_fixed_size_png(tmp_path):
    grid = Grid(30, 1.0 / 30)
    ens = simulate(GBM, [0.05, 0.2], 0.5, grid, generate_noise(5, 12, grid))
    series = np.linspace(0.2, 0.8, 31)
    path = str(tmp_path / "fit.png")
    returned = render_fit_chart(series, ens, path)
    assert returned == path
    with Image.open(path) as img:
        assert img.size == (640, 480)
        assert img.format == "PNG"


def test_fit_chart_is_byte_deterministic(tmp_path):
    grid = Grid(30, 1.0 / 30)
    ens = simulate(GBM, [0.05, 0.2], 0.5, grid, generate_noise(5, 3, grid))
    series = np.linspace(0.2, 0.8, 31)
    a = str(tmp_path / "a.png")
    b = str(tmp_path / "deep" / "b.png")
    render_fit_chart(series, ens, a)
    render_fit_chart(series, ens, b)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_market_chart_renders(tmp_path):
    hist = np.linspace(1.0, 2.0, 40)
    sim = hist + 0.05
    path = str(tmp_path / "cmp.png")
    render_market_chart(hist, sim, [0, 10, 20, 30], path)
    with Image.open(path) as img:
        assert img.size == (640, 480)
