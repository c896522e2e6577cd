"""Experiment configuration: presets, flat key=value files, fingerprints."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..models import ModelSpec
from ..optimizers import AdamConfig, FoxtsageConfig

DATA_DIR_ENV = "FOXTSAGE_DATA_DIR"

# (iterations, population size)
SETTINGS = {1: (5, 10), 2: (50, 30)}


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    dataset: str = "synth"              # mnist | idx | csv | synth
    data_dir: str | None = None
    images: str | None = None
    labels: str | None = None
    csv_path: str | None = None
    mnist_split: str = "canonical"      # canonical | pooled
    split_fraction: float = 0.8
    subsample: int = 0
    synth_n: int = 1000
    synth_d: int = 10
    synth_separation: float = 3.0
    # model
    model: str = "logreg"
    hidden1: int = 128
    hidden2: int = 128
    dropout_rate: float = 0.5
    batch_size: int = 64
    # optimizer
    optimizer: str = "foxtsage"         # foxtsage | adam | sgd
    setting: int = 1
    iterations: int | None = None
    population_size: int | None = None
    lr_min: float = 1e-4
    lr_max: float = 0.1
    lr_base: float = 0.01
    alpha: float = 1.0
    gaussian_sigma: float = 1.0
    denom_floor: float = 0.1
    candidate_start: str = "snapshot"
    decay_mode: str = "off"
    adam_lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int | None = None
    baseline_budget: str = "iterations"  # iterations | total
    # run control
    runs: int = 5
    seed: int = 0
    workers: int = 1
    averaging: str = "macro"
    out: str | None = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {sorted(SETTINGS)}, got {self.setting}")
        if self.optimizer not in ("foxtsage", "adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.dataset not in ("mnist", "idx", "csv", "synth"):
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.baseline_budget not in ("iterations", "total"):
            raise ValueError("baseline_budget must be 'iterations' or 'total'")
        if self.mnist_split not in ("canonical", "pooled"):
            raise ValueError("mnist_split must be 'canonical' or 'pooled'")
        if self.runs < 1 or self.batch_size < 1:
            raise ValueError("runs and batch_size must be >= 1")

    @property
    def effective_iterations(self) -> int:
        return self.iterations if self.iterations is not None else SETTINGS[self.setting][0]

    @property
    def effective_population(self) -> int:
        return self.population_size if self.population_size is not None else SETTINGS[self.setting][1]

    @property
    def baseline_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        if self.baseline_budget == "total":
            return self.effective_iterations * self.effective_population
        return self.effective_iterations

    def resolved_data_dir(self) -> Path:
        return Path(self.data_dir or os.environ.get(DATA_DIR_ENV) or "data")

    def run_seed(self, run_index: int) -> int:
        """Per-run seed: root seed XOR run index."""
        return self.seed ^ run_index

    def foxtsage_config(self) -> FoxtsageConfig:
        return FoxtsageConfig(
            population_size=self.effective_population,
            iterations=self.effective_iterations,
            lr_min=self.lr_min, lr_max=self.lr_max, lr_base=self.lr_base, alpha=self.alpha,
            gaussian_sigma=self.gaussian_sigma, denom_floor=self.denom_floor,
            candidate_start=self.candidate_start, decay_mode=self.decay_mode,
        )

    def adam_config(self) -> AdamConfig:
        return AdamConfig(self.adam_lr, self.beta1, self.beta2, self.eps)

    def model_spec(self, input_dim: int, num_classes: int) -> ModelSpec:
        return ModelSpec(self.model, input_dim, num_classes, (self.hidden1, self.hidden2), self.dropout_rate)

    def resolved(self) -> dict:
        """Every setting that influences emitted numbers, with presets expanded."""
        d = asdict(self)
        for k in ("out", "workers"):
            d.pop(k)
        d["iterations"] = self.effective_iterations
        d["population_size"] = self.effective_population
        d["epochs"] = self.baseline_epochs
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(key: str, value: str):
    if key not in _FIELDS:
        raise KeyError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    typ = str(_FIELDS[key].type)
    if value.lower() in ("none", "null", ""):
        return None
    if "int" in typ and "float" not in typ:
        return int(value)
    if "float" in typ:
        return float(value)
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    return value


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    for k, v in overrides.items():
        if v is None:
            continue
        values[k] = _coerce(k, v) if isinstance(v, str) else v
    return ExperimentConfig(**values)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
