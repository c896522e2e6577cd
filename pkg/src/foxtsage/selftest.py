"""Quick oracle checks runnable from an installed package (``foxtsage selftest``).

Each check compares the library against an independent computation: brute-force
enumeration, finite differences, or a straight-line re-derivation.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .datasets import dataset_from_idx_bytes, encode_idx_images, encode_idx_labels, one_hot
from .metrics import improvement_table, wilcoxon_null_pvalue
from .models import ModelSpec, backward, init_params
from .numerics import Rng
from .optimizers import AdamConfig, AdamState, FoxtsageConfig, ModelContext, TrainData, adam_step, foxtsage_run


def _brute_wilcoxon(w: int, n: int) -> float:
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        t_plus = sum(r for r, s in zip(range(1, n + 1), signs) if s)
        if min(t_plus, n * (n + 1) // 2 - t_plus) <= w:
            hits += 1
    return hits / 2 ** n


def check_wilcoxon():
    for w, expected in ((4, 0.013672), (7, 0.037109), (8, 0.048828)):
        p = wilcoxon_null_pvalue(w, 10)
        if p != _brute_wilcoxon(w, 10) or round(p, 6) != expected:
            return False, f"W={w}: p={p}"
    return True, "W=4,7,8 at n=10 match enumeration"


def check_improvement_arithmetic():
    adam = {"Loss Mean": 16.402, "Accuracy Mean": 0.899, "Time Mean": 9.177}
    fox = {"Loss Mean": 9.508, "Accuracy Mean": 0.906, "Time Mean": 39.541}
    imp = improvement_table(adam, fox)
    want = {"Loss Mean": 42.03, "Accuracy Mean": 0.78, "Time Mean": -330.87}
    bad = {k: v for k, v in imp.items() if abs(v - want[k]) > 0.01}
    return not bad, f"{bad or 'all rows within 0.01'}"


def check_gradients():
    rng = Rng(7)
    worst = 0.0
    for arch in ("logreg", "mlp"):
        spec = ModelSpec(arch, 5, 3, (6, 4))
        params = init_params(spec, rng)
        params.flat[...] += 0.1 * rng.gaussian_array(params.size)
        x = rng.gaussian_array((6, 5))
        y = one_hot([rng.integers(3) for _ in range(6)], 3)
        _, grad = backward(spec, params, x, y)
        for i in range(params.size):
            old = params.flat[i]
            params.flat[i] = old + 1e-5
            up, _ = backward(spec, params, x, y)
            params.flat[i] = old - 1e-5
            down, _ = backward(spec, params, x, y)
            params.flat[i] = old
            num = (up - down) / 2e-5
            den = max(abs(num), abs(grad.flat[i]))
            if den > 0:
                worst = max(worst, abs(num - grad.flat[i]) / den)
    return worst < 1e-5, f"max relative error {worst:.2e}"


def check_adam():
    from .models import ParamSet
    cfg = AdamConfig()
    p = ParamSet([("x", (1, 1))], np.array([1.0]))
    st = AdamState.zeros(p)
    x, m, v = 1.0, 0.0, 0.0
    for t in range(1, 11):
        g = 2.0 * p.flat[0]
        p, st = adam_step(p, ParamSet([("x", (1, 1))], np.array([g])), cfg, st)
        gx = 2.0 * x
        m = 0.9 * m + 0.1 * gx
        v = 0.999 * v + 0.001 * gx * gx
        x = x - 0.001 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        if p.flat[0] != x:
            return False, f"step {t}: {p.flat[0]!r} != {x!r}"
    return True, "10-step trajectory bit-identical"


def check_foxtsage():
    rng = Rng(3)
    x = rng.gaussian_array((40, 3))
    labels = (x[:, 0] > 0).astype(int)
    data = TrainData(x, one_hot(labels, 2))
    spec = ModelSpec("logreg", 3, 2)
    cfg = FoxtsageConfig(population_size=4, iterations=3)
    runs = []
    for _ in range(2):
        ctx = ModelContext(spec, init_params(spec, Rng(1)), 8)
        runs.append(foxtsage_run(cfg, ctx, data, Rng(2)))
    losses = [t["best_loss"] for t in runs[0].trace]
    same = [r["epoch_loss"] for r in runs[0].records] == [r["epoch_loss"] for r in runs[1].records]
    mono = all(b <= a for a, b in zip(losses, losses[1:]))
    bounded = all(cfg.lr_min <= r["lr"] <= cfg.lr_max for r in runs[0].records)
    return same and mono and bounded, f"deterministic={same} monotone={mono} bounded={bounded}"


def check_idx():
    rng = Rng(5)
    imgs = (rng.uniform_array(0, 256, (3, 4, 4))).astype(np.uint8)
    labels = np.array([1, 0, 9], dtype=np.uint8)
    ds = dataset_from_idx_bytes(encode_idx_images(imgs), encode_idx_labels(labels))
    back = np.rint(ds.features * 255).astype(np.uint8).reshape(3, 4, 4)
    ok = np.array_equal(back, imgs) and list(ds.labels) == [1, 0, 9]
    return ok, "IDX round trip"


CHECKS = {
    "wilcoxon_exact": check_wilcoxon,
    "improvement_arithmetic": check_improvement_arithmetic,
    "gradients": check_gradients,
    "adam_oracle": check_adam,
    "foxtsage_invariants": check_foxtsage,
    "idx_roundtrip": check_idx,
}


def run(echo=print) -> bool:
    all_ok = True
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        all_ok &= ok
    return all_ok
