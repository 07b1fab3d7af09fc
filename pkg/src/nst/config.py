"""Experiment configuration: one serializable record per run.

A config captures everything a run needs (experiment kind, data
source, proposer choice, module settings, seeds), so a persisted file
re-runs to identical outputs.  JSON round-trips are canonical: parsing
a canonical file and re-serializing reproduces it byte for byte, and
the config hash is taken over everything except the output directory,
so the same experiment re-run elsewhere hashes identically.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

from .calibrate import CalibConfig, LossSpec
from .market import MarketConfig
from .vlm import VlmConfig

EXPERIMENT_KINDS = ("calibrate", "discover", "market")
PROPOSER_KINDS = ("scripted", "vlm")
PROMPT_MODES = ("standard", "parsimonious")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    data: str
    out: str = "runs/out"
    model: str | None = None
    proposer: str = "scripted"
    mode: str = "standard"
    domain: str | None = None
    rounds: int = 5
    trials: int = 1
    seed: int = 0
    n_paths: int = 100
    calib: CalibConfig = field(default_factory=CalibConfig)
    loss: LossSpec = field(default_factory=LossSpec)
    market: MarketConfig = field(default_factory=MarketConfig)
    vlm: VlmConfig | None = None

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.proposer not in PROPOSER_KINDS:
            raise ValueError(f"unknown proposer {self.proposer!r}")
        if self.mode not in PROMPT_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rounds < 1 or self.trials < 1:
            raise ValueError("rounds and trials must be at least 1")
        if self.kind == "calibrate" and not self.model:
            raise ValueError("calibrate experiments need a model file")
        if self.proposer == "vlm" and self.vlm is None:
            raise ValueError("vlm proposer needs a vlm config section")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["loss"]["weights"] = list(self.loss.weights)
        return out


def _build(cls, data: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(
            f"unknown {context} keys: {', '.join(sorted(unknown))}"
        )
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Strict construction: unknown keys anywhere are errors, so a typo
    in a config file cannot silently fall back to a default."""
    data = dict(data)
    if "calib" in data and isinstance(data["calib"], dict):
        data["calib"] = _build(CalibConfig, data["calib"], "calib")
    if "loss" in data and isinstance(data["loss"], dict):
        loss = dict(data["loss"])
        if "weights" in loss:
            loss["weights"] = tuple(loss["weights"])
        data["loss"] = _build(LossSpec, loss, "loss")
    if "market" in data and isinstance(data["market"], dict):
        data["market"] = _build(MarketConfig, data["market"], "market")
    if data.get("vlm") is not None and isinstance(data["vlm"], dict):
        data["vlm"] = _build(VlmConfig, data["vlm"], "vlm")
    return _build(ExperimentConfig, data, "config")


def to_canonical_json(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n"


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_canonical_json(config))


def config_hash(config: ExperimentConfig) -> str:
    """Hash of the canonical form minus the output directory."""
    data = config.to_dict()
    data.pop("out", None)
    text = json.dumps(data, sort_keys=True, indent=2)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
