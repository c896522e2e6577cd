"""Execute experiment cells and persist their run records."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import datasets as ds
from ..metrics import accuracy, confusion_matrix, precision_recall_f1
from ..models import cross_entropy_loss, forward, init_params, predict_labels
from ..numerics import Rng
from ..optimizers import (
    FoxtsageRunError,
    ModelContext,
    TrainData,
    foxtsage_run,
    train_baseline,
)
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# Rng.derive stream tags; the split and synthetic data depend on the root seed
# only, so every run of a cell (and paired cells) shares one test set.
STREAM_SPLIT, STREAM_SYNTH, STREAM_INIT, STREAM_TRAIN = 0, 1, 2, 3


@dataclass
class RunRecord:
    fingerprint: str
    run_index: int
    seed: int
    optimizer: str
    status: str = "ok"
    error: str | None = None
    metrics: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)
    loss_sum_curve: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _resolve(base: Path, p: str | None) -> Path:
    if p is None:
        raise ValueError("missing dataset path")
    path = Path(p)
    return path if path.is_absolute() or path.exists() else base / path


def load_split(cfg: ExperimentConfig) -> ds.Split:
    """Load the configured dataset and partition it.

    Canonical MNIST keeps its train/test files; every other source (and
    ``mnist_split=pooled``) is pooled and split by ``split_fraction``.
    """
    base = cfg.resolved_data_dir()
    split_rng = Rng.derive(cfg.seed, STREAM_SPLIT)
    if cfg.dataset == "mnist":
        train = ds.load_mnist_dir(base, "train")
        test = ds.load_mnist_dir(base, "test")
        if cfg.mnist_split == "canonical":
            if cfg.subsample:
                train = train.subset(split_rng.permutation(len(train))[:cfg.subsample])
            return ds.Split(train, test, len(train) / (len(train) + len(test)))
        data = ds.concat(train, test, "mnist")
    elif cfg.dataset == "idx":
        data = ds.load_mnist_idx(_resolve(base, cfg.images), _resolve(base, cfg.labels), "idx")
    elif cfg.dataset == "csv":
        data = ds.load_csv(_resolve(base, cfg.csv_path))
    else:
        data = ds.synth_binary(cfg.synth_n, cfg.synth_d, cfg.synth_separation,
                               Rng.derive(cfg.seed, STREAM_SYNTH))
    if cfg.subsample and cfg.subsample < len(data):
        data = data.subset(np.sort(split_rng.permutation(len(data))[:cfg.subsample]))
    return ds.split_train_test(data, cfg.split_fraction, split_rng)


def evaluate(spec, params, data: ds.LabeledDataset, averaging: str = "macro") -> dict:
    probs = forward(spec, params, data.features, "eval")
    cm = confusion_matrix(data.labels, predict_labels(probs), data.num_classes)
    p, r, f1 = precision_recall_f1(cm, averaging)
    loss = cross_entropy_loss(probs, ds.one_hot(data.labels, data.num_classes))
    return {"loss": loss, "accuracy": accuracy(cm), "precision": p, "recall": r, "f1": f1}


def run_one(cfg: ExperimentConfig, split: ds.Split, run_index: int) -> RunRecord:
    seed = cfg.run_seed(run_index)
    rec = RunRecord(cfg.fingerprint(), run_index, seed, cfg.optimizer, started_at=_now())
    spec = cfg.model_spec(split.train.dim, split.train.num_classes)
    train = TrainData.from_dataset(split.train)
    ctx = ModelContext(spec, init_params(spec, Rng.derive(seed, STREAM_INIT)), cfg.batch_size)
    rng = Rng.derive(seed, STREAM_TRAIN)

    t0 = time.perf_counter()
    try:
        if cfg.optimizer == "foxtsage":
            res = foxtsage_run(cfg.foxtsage_config(), ctx, train, rng, workers=cfg.workers)
            params = res.params
            rec.trace = res.trace
            rec.candidates = res.records
            rec.loss_curve = [t["best_loss"] for t in res.trace]
            by_iter = {}
            for c in res.records:
                if c["is_best"]:
                    by_iter[c["iteration"]] = c["epoch_loss_sum"]
            # summed loss of the epoch that produced the running best
            last = math.nan
            for t in res.trace:
                last = by_iter.get(t["iteration"], last)
                rec.loss_sum_curve.append(last)
            train_loss = res.state.best_loss
        else:
            out = train_baseline(ctx, train, cfg.baseline_epochs, rng, optimizer=cfg.optimizer,
                                 lr=cfg.lr_base, adam=cfg.adam_config())
            params = out.params
            rec.loss_curve = out.epoch_losses
            rec.loss_sum_curve = out.epoch_loss_sums
            if out.diverged:
                raise FloatingPointError("training diverged to a non-finite loss")
            train_loss = out.epoch_losses[-1] if out.epoch_losses else math.nan
    except (FoxtsageRunError, FloatingPointError) as exc:
        rec.status = "failed"
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.finished_at = _now()
        log.warning("run %d failed: %s", run_index, rec.error)
        return rec
    elapsed = time.perf_counter() - t0

    rec.metrics = evaluate(spec, params, split.test, cfg.averaging)
    rec.metrics["train_loss"] = train_loss
    rec.metrics["train_loss_sum"] = rec.loss_sum_curve[-1] if rec.loss_sum_curve else math.nan
    rec.metrics["time"] = elapsed
    rec.finished_at = _now()
    return rec


def run_cell(cfg: ExperimentConfig, split: ds.Split | None = None) -> list[RunRecord]:
    """Run ``cfg.runs`` seeded runs; persist them when ``cfg.out`` is set."""
    records = []
    if split is None:
        try:
            split = load_split(cfg)
        except (OSError, ValueError) as exc:
            log.error("dataset load failed: %s", exc)
            err = f"{type(exc).__name__}: {exc}"
            records = [RunRecord(cfg.fingerprint(), i, cfg.run_seed(i), cfg.optimizer, "failed", err,
                                 started_at=_now(), finished_at=_now()) for i in range(cfg.runs)]
    for i in range(cfg.runs if split is not None else 0):
        rec = run_one(cfg, split, i)
        log.info("run %d/%d %s %s", i + 1, cfg.runs, rec.status,
                 {k: round(v, 6) for k, v in rec.metrics.items()})
        records.append(rec)
    if cfg.out:
        save_cell(cfg, records, cfg.out)
    return records


def save_cell(cfg: ExperimentConfig, records: list[RunRecord], out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(
        {"fingerprint": cfg.fingerprint(), "resolved": cfg.resolved()}, indent=2, sort_keys=True))
    (out / "records.json").write_text(json.dumps([r.to_dict() for r in records], indent=1))


def load_cell(directory) -> list[RunRecord]:
    path = Path(directory) / "records.json"
    return [RunRecord.from_dict(d) for d in json.loads(path.read_text())]
