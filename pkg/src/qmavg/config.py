"""Experiment configuration and its file / command-line representation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import InvalidConfigurationError

FIG3_LENGTHS = tuple(range(10, 201, 20))


@dataclass
class ExperimentConfig:
    """All knobs of a tomography or RB run.

    Defaults are desk-scale.  Full-size studies use 10^4 (tomography) or
    10^3 (RB) particles per model and 100 trials per true rank.
    """

    experiment: str = "tomography"
    qubits: int = 2
    candidate_ranks: Optional[list[int]] = None
    true_rank: int = 1
    rb_true_model: str = "zeroth"
    rb_prior_set: str = "I"
    particles_per_model: int = 2000
    batches: int = 50
    shots_per_batch: int = 100
    sequence_lengths: list[int] = field(default_factory=lambda: list(FIG3_LENGTHS))
    repetitions_per_length: int = 1000
    trials: int = 10
    seed: int = 0
    resample_threshold: float = 0.5
    liu_west_a: float = 0.98
    prune_threshold: float = 0.0
    output_path: Optional[str] = None
    prior_scale: float = 0.01
    prior_scale_convention: str = "variance"
    per_shot_updates: bool = True
    include_identity: bool = False
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if self.candidate_ranks is None and self.experiment == "tomography":
            self.candidate_ranks = list(range(1, 2**self.qubits + 1))

    @property
    def ranks(self) -> list[int]:
        return list(self.candidate_ranks or range(1, 2**self.qubits + 1))

    def validate(self) -> "ExperimentConfig":
        def need(cond: bool, msg: str):
            if not cond:
                raise InvalidConfigurationError(msg)

        need(self.experiment in ("tomography", "rb"), f"unknown experiment {self.experiment!r}")
        for name in ("particles_per_model", "batches", "shots_per_batch", "trials",
                     "repetitions_per_length", "workers", "qubits"):
            value = getattr(self, name)
            need(isinstance(value, int) and not isinstance(value, bool) and value > 0,
                 f"{name} must be a positive integer, got {value!r}")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        need(0.0 <= self.resample_threshold <= 1.0, "resample_threshold must lie in [0, 1]")
        need(0.0 < self.liu_west_a <= 1.0, "liu_west_a must lie in (0, 1]")
        need(0.0 <= self.prune_threshold < 1.0, "prune_threshold must lie in [0, 1)")
        if self.experiment == "tomography":
            dim = 2**self.qubits
            ranks = self.ranks
            need(len(ranks) > 0 and len(set(ranks)) == len(ranks), "candidate_ranks must be distinct and nonempty")
            need(all(1 <= r <= dim for r in ranks), f"candidate ranks must lie in [1, {dim}]")
            need(self.true_rank in ranks, f"true_rank {self.true_rank} is not among candidate_ranks {ranks}")
        else:
            need(self.rb_true_model in ("zeroth", "first"), "rb_true_model must be 'zeroth' or 'first'")
            need(self.rb_prior_set in ("I", "II"), "rb_prior_set must be 'I' or 'II'")
            need(len(self.sequence_lengths) > 0 and all(isinstance(m, int) and m >= 1 for m in self.sequence_lengths),
                 "sequence_lengths must be positive integers")
            need(self.prior_scale > 0, "prior_scale must be positive")
            need(self.prior_scale_convention in ("variance", "stddev"),
                 "prior_scale_convention must be 'variance' or 'stddev'")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}
# config files and flags may say `out` for the output path
ALIASES = {"out": "output_path"}


def normalize_keys(raw: dict[str, Any]) -> dict[str, Any]:
    """Map kebab-case / alias keys onto ExperimentConfig field names."""
    out = {}
    for key, value in raw.items():
        name = key.replace("-", "_")
        name = ALIASES.get(name, name)
        if name not in FIELD_NAMES:
            raise InvalidConfigurationError(f"unknown configuration key {key!r}")
        out[name] = value
    return out


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a YAML (or JSON) key-value file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfigurationError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise InvalidConfigurationError(f"cannot parse config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfigurationError(f"config file {path} must hold a key-value mapping")
    return normalize_keys(data)


def build_config(experiment: str, file_values: dict[str, Any], overrides: dict[str, Any]) -> ExperimentConfig:
    values = {**file_values, **{k: v for k, v in overrides.items() if v is not None}}
    values["experiment"] = experiment
    try:
        return ExperimentConfig(**values).validate()
    except TypeError as exc:
        raise InvalidConfigurationError(str(exc)) from exc
