"""SGD, Adam, and the Foxtsage learning-rate population search.

Foxtsage keeps a population of candidate learning rates. Every iteration each
candidate trains the model for one epoch of plain mini-batch SGD; the lowest
resulting training loss sets ``best_lr``. The population is then resampled
around ``best_lr`` by a fair coin per candidate: multiply by ``1 + g``
(exploration) or divide by it (exploitation), with ``g`` Gaussian, and clip to
``[lr_min, lr_max]``.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import LabeledDataset, one_hot
from .models import ModelSpec, ParamSet, backward, forward, cross_entropy_loss
from .numerics import BoundsError, DomainError, Rng, clip

log = logging.getLogger(__name__)


def sgd_step(params: ParamSet, grad: ParamSet, lr: float) -> ParamSet:
    params.check_congruent(grad)
    if not lr > 0:
        raise BoundsError(f"learning rate must be positive, got {lr}")
    return ParamSet(params.shapes, params.flat - lr * grad.flat)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise BoundsError("Adam lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise BoundsError("Adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise BoundsError("Adam eps must be positive")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, params: ParamSet) -> "AdamState":
        return cls(np.zeros(params.size), np.zeros(params.size), 0)


def _adam_inplace(flat: np.ndarray, g: np.ndarray, cfg: AdamConfig, state: AdamState):
    state.t += 1
    state.m *= cfg.beta1
    state.m += (1 - cfg.beta1) * g
    state.v *= cfg.beta2
    state.v += (1 - cfg.beta2) * (g * g)
    m_hat = state.m / (1 - cfg.beta1 ** state.t)
    v_hat = state.v / (1 - cfg.beta2 ** state.t)
    flat -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def adam_step(params: ParamSet, grad: ParamSet, cfg: AdamConfig,
              state: AdamState) -> tuple[ParamSet, AdamState]:
    """One Adam update; returns new parameters and a new state (inputs untouched)."""
    params.check_congruent(grad)
    if state.t < 0 or state.m.shape != (params.size,) or state.v.shape != (params.size,):
        raise BoundsError("Adam state does not match the parameter layout")
    new_state = AdamState(state.m.copy(), state.v.copy(), state.t)
    flat = params.flat.copy()
    _adam_inplace(flat, grad.flat, cfg, new_state)
    return ParamSet(params.shapes, flat), new_state


@dataclass
class TrainData:
    x: np.ndarray
    y: np.ndarray  # one-hot targets

    @classmethod
    def from_dataset(cls, ds: LabeledDataset) -> "TrainData":
        return cls(ds.features, one_hot(ds.labels, ds.num_classes))

    def __len__(self):
        return self.x.shape[0]


@dataclass
class ModelContext:
    spec: ModelSpec
    params: ParamSet
    batch_size: int = 64


@dataclass
class EpochResult:
    loss: float        # mean loss over the training set after the epoch
    loss_sum: float    # sum of mini-batch losses seen during the epoch
    finite: bool


def full_loss(spec: ModelSpec, params: ParamSet, data: TrainData) -> float:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return cross_entropy_loss(forward(spec, params, data.x, "eval"), data.y)


def run_epoch(spec: ModelSpec, params: ParamSet, data: TrainData, batch_size: int,
              rng: Rng, update) -> EpochResult:
    """One shuffled pass of mini-batch updates, mutating ``params`` in place.

    ``update(flat, grad_flat)`` applies the optimizer step to the flat buffer.
    The same ``rng`` drives the shuffle and any dropout masks.
    """
    n = len(data)
    order = rng.permutation(n)
    loss_sum = 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grad = backward(spec, params, data.x[idx], data.y[idx], "train", rng)
            loss_sum += loss
            if not math.isfinite(loss):
                return EpochResult(math.nan, math.nan, False)
            update(params.flat, grad.flat)
    if not np.all(np.isfinite(params.flat)):
        return EpochResult(math.nan, loss_sum, False)
    loss = full_loss(spec, params, data)
    return EpochResult(loss, loss_sum, math.isfinite(loss))


def sgd_update(lr: float):
    def update(flat, g):
        flat -= lr * g
    return update


def adam_update(cfg: AdamConfig, state: AdamState):
    def update(flat, g):
        _adam_inplace(flat, g, cfg, state)
    return update


@dataclass
class TrainResult:
    params: ParamSet
    epoch_losses: list[float]
    epoch_loss_sums: list[float]
    diverged: bool = False


def train_baseline(ctx: ModelContext, data: TrainData, epochs: int, rng: Rng,
                   optimizer: str = "adam", lr: float | None = None,
                   adam: AdamConfig | None = None) -> TrainResult:
    """Train ``ctx.params`` (in place) for a fixed number of epochs with SGD or Adam."""
    if optimizer == "adam":
        cfg = adam or AdamConfig()
        update = adam_update(cfg, AdamState.zeros(ctx.params))
    elif optimizer == "sgd":
        update = sgd_update(lr if lr is not None else 0.01)
    else:
        raise ValueError(f"unknown baseline optimizer {optimizer!r}")
    losses, sums = [], []
    for _ in range(epochs):
        res = run_epoch(ctx.spec, ctx.params, data, ctx.batch_size, rng, update)
        losses.append(res.loss)
        sums.append(res.loss_sum)
        if not res.finite:
            return TrainResult(ctx.params, losses, sums, diverged=True)
    return TrainResult(ctx.params, losses, sums)


@dataclass(frozen=True)
class FoxtsageConfig:
    population_size: int = 10
    iterations: int = 5
    lr_min: float = 1e-4
    lr_max: float = 0.1
    lr_base: float = 0.01
    alpha: float = 1.0
    gaussian_sigma: float = 1.0
    denom_floor: float = 0.1
    candidate_start: str = "snapshot"   # or "sequential"
    decay_mode: str = "off"             # or "decay": recentre best_lr on lr_decay(...)

    def __post_init__(self):
        if not 0 < self.lr_min < self.lr_max:
            raise BoundsError(f"need 0 < lr_min < lr_max, got [{self.lr_min}, {self.lr_max}]")
        if self.population_size < 1 or self.iterations < 1:
            raise BoundsError("population_size and iterations must be >= 1")
        if self.alpha < 0 or self.gaussian_sigma < 0:
            raise BoundsError("alpha and gaussian_sigma must be >= 0")
        if not self.denom_floor > 0:
            raise BoundsError("denom_floor must be positive")
        if self.candidate_start not in ("snapshot", "sequential"):
            raise ValueError(f"candidate_start must be 'snapshot' or 'sequential', got {self.candidate_start!r}")
        if self.decay_mode not in ("off", "decay"):
            raise ValueError(f"decay_mode must be 'off' or 'decay', got {self.decay_mode!r}")


@dataclass
class FoxtsageState:
    population: np.ndarray
    best_lr: float
    best_loss: float = math.inf
    iteration: int = 0
    best_params: ParamSet | None = None
    stream_seed: int = 0
    centre_lr: float | None = None  # overrides best_lr as the resampling centre
    last_branches: list[str] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)


class FoxtsageRunError(RuntimeError):
    def __init__(self, message: str, trace: list[dict], records: list[dict]):
        super().__init__(message)
        self.trace = trace
        self.records = records


def foxtsage_init(cfg: FoxtsageConfig, rng: Rng) -> FoxtsageState:
    population = rng.uniform_array(cfg.lr_min, cfg.lr_max, cfg.population_size)
    stream_seed = rng.integers(2**63)
    return FoxtsageState(population=population, best_lr=float(population[0]), stream_seed=stream_seed)


def _evaluate_one(spec, start: ParamSet, data, batch_size, lr, rng, copy_start: bool):
    t0 = time.perf_counter()
    params = start.clone() if copy_start else start
    res = run_epoch(spec, params, data, batch_size, rng, sgd_update(lr))
    return res, params, time.perf_counter() - t0


def foxtsage_evaluate_candidates(state: FoxtsageState, cfg: FoxtsageConfig, ctx: ModelContext,
                                 data: TrainData, workers: int = 1) -> FoxtsageState:
    """Train one epoch per candidate and fold the results into the best-so-far.

    Candidate ``i`` in iteration ``k`` draws its shuffle order from
    ``Rng.derive(state.stream_seed, k, i)``, so serial and threaded evaluation
    yield identical numbers. Results are merged in index order and a strict
    ``<`` keeps the first candidate on ties. Non-finite losses mark the
    candidate as failed; it is logged but never becomes best.
    """
    k = state.iteration
    lrs = [float(lr) for lr in state.population]
    rngs = [Rng.derive(state.stream_seed, k, i) for i in range(len(lrs))]
    new = replace(state, records=list(state.records))

    if cfg.candidate_start == "snapshot":
        start = ctx.params

        def job(i):
            return _evaluate_one(ctx.spec, start, data, ctx.batch_size, lrs[i], rngs[i], True)

        if workers > 1 and len(lrs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(job, range(len(lrs))))
        else:
            results = [job(i) for i in range(len(lrs))]
        outcomes = enumerate(results)
    else:
        # candidates train the shared parameters one after another
        def sequential():
            for i in range(len(lrs)):
                yield i, _evaluate_one(ctx.spec, ctx.params, data, ctx.batch_size, lrs[i], rngs[i], False)
        outcomes = sequential()

    for i, (res, params, wall) in outcomes:
        failed = not res.finite
        is_best = (not failed) and res.loss < new.best_loss
        if is_best:
            new.best_loss = res.loss
            new.best_lr = lrs[i]
            new.best_params = params.clone()
        if failed:
            log.warning("iteration %d candidate %d (lr=%g) produced a non-finite loss", k, i, lrs[i])
        new.records.append({
            "iteration": k,
            "candidate_index": i,
            "lr": lrs[i],
            "epoch_loss": res.loss,
            "epoch_loss_sum": res.loss_sum,
            "is_best": is_best,
            "failed": failed,
            "wall_time_s": wall,
        })
    if cfg.candidate_start == "snapshot" and new.best_params is not None:
        ctx.params = new.best_params.clone()
    return new


def foxtsage_update_population(state: FoxtsageState, cfg: FoxtsageConfig, rng: Rng) -> FoxtsageState:
    population = np.empty(len(state.population))
    branches = []
    best = state.best_lr if state.centre_lr is None else state.centre_lr
    for i in range(len(population)):
        r = rng.uniform(0.0, 1.0)
        g = cfg.gaussian_sigma * rng.gaussian()
        if r < 0.5:
            cand = best * (1.0 + g)
            branches.append("explore")
        else:
            cand = best / max(abs(1.0 + g), cfg.denom_floor)
            branches.append("exploit")
        population[i] = clip(cand, cfg.lr_min, cfg.lr_max)
    return replace(state, population=population, last_branches=branches)


def lr_decay(lr_base: float, alpha: float, f_best: float) -> float:
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if not f_best >= 0:
        raise DomainError(f"best fitness must be >= 0, got {f_best}")
    return lr_base / (1.0 + alpha * f_best)


@dataclass
class FoxtsageResult:
    params: ParamSet
    best_lr: float
    trace: list[dict]
    records: list[dict]
    state: FoxtsageState


def foxtsage_run(cfg: FoxtsageConfig, ctx: ModelContext, data: TrainData, rng: Rng,
                 workers: int = 1) -> FoxtsageResult:
    """Run ``cfg.iterations`` rounds of candidate evaluation and population update.

    Returns the parameters that produced the lowest training loss, the learning
    rate that produced them, and one trace entry per iteration. With
    ``decay_mode="decay"`` the centre of the next resampling becomes
    ``clip(lr_decay(lr_base, alpha, best_loss))`` instead of the winning rate;
    ``best_lr`` itself still tracks the winner.
    """
    state = foxtsage_init(cfg, rng)
    trace = []
    for it in range(cfg.iterations):
        state.iteration = it
        state = foxtsage_evaluate_candidates(state, cfg, ctx, data, workers=workers)
        if state.best_params is None:
            raise FoxtsageRunError(f"every candidate failed in iteration {it}", trace, state.records)
        log.info("Iteration: %d Best Loss: %.6f Best Learning Rate: %.6g",
                 it + 1, state.best_loss, state.best_lr)
        if cfg.decay_mode == "decay":
            state.centre_lr = clip(lr_decay(cfg.lr_base, cfg.alpha, state.best_loss), cfg.lr_min, cfg.lr_max)
        trace.append({"iteration": it, "best_loss": state.best_loss, "best_lr": state.best_lr,
                      "centre_lr": state.best_lr if state.centre_lr is None else state.centre_lr})
        state = foxtsage_update_population(state, cfg, rng)
    return FoxtsageResult(state.best_params, state.best_lr, trace, state.records, state)
