import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from foxtsage.metrics import (
    DegenerateInputError,
    MetricsReport,
    accuracy,
    aggregate,
    confusion_matrix,
    improvement_table,
    per_class_prf,
    percentage_improvement,
    precision_recall_f1,
    row_direction,
    summary_rows,
    time_avg,
    wilcoxon_exact,
    wilcoxon_null_pvalue,
)
from foxtsage.numerics import DomainError

# Reference Adam / Foxtsage summary columns and their improvement column.
REFERENCE_SUMMARY = {
    "Loss Mean": (16.402, 9.508, 42.03),
    "Loss StdDev": (36.085, 20.86, 42.19),
    "Accuracy Mean": (0.899, 0.906, 0.78),
    "Accuracy StdDev": (0.087, 0.092, 5.75),
    "Precision Mean": (0.881, 0.889, 0.91),
    "Precision StdDev": (0.088, 0.095, 7.95),
    "Recall Mean": (0.88, 0.889, 1.02),
    "Recall StdDev": (0.089, 0.096, 7.87),
    "F1-Score Mean": (0.898, 0.906, 0.89),
    "F1-Score StdDev": (0.087, 0.092, 5.75),
    "Time Mean": (9.177, 39.541, -330.87),
    "Time StdDev": (5.578, 20.423, -266.13),
}


def brute_force_wilcoxon(diffs):
    """Enumerate every sign pattern over the ranks of |d| (no ties)."""
    d = [x for x in diffs if x != 0]
    n = len(d)
    order = sorted(range(n), key=lambda i: abs(d[i]))
    rank = {i: r + 1 for r, i in enumerate(order)}
    t_plus = sum(rank[i] for i in range(n) if d[i] > 0)
    w = min(t_plus, n * (n + 1) // 2 - t_plus)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = sum(r for r, bit in zip(range(1, n + 1), signs) if bit)
        if min(s, n * (n + 1) // 2 - s) <= w:
            hits += 1
    return w, min(1.0, hits / 2 ** n)


def diffs_with_statistic(w, n=10):
    """Paired differences whose negative ranks sum to exactly ``w``."""
    neg = set()
    for r in range(n, 0, -1):
        if r <= w - sum(neg):
            neg.add(r)
    assert sum(neg) == w
    return [-float(r) if r in neg else float(r) for r in range(1, n + 1)]


# ---- accuracy / precision / recall / F1 ---------------------------------

def test_accuracy_cases():
    assert accuracy(np.diag([3, 4, 5])) == 1.0
    assert accuracy([[5, 1], [0, 4]]) == 0.9
    with pytest.raises(DomainError):
        accuracy(np.zeros((2, 2)))


def test_confusion_matrix_orientation():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 0], 3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 0]]


@pytest.mark.parametrize("seed", range(5))
def test_accuracy_matches_per_sample_scan(seed):
    r = np.random.default_rng(seed)
    y = r.integers(0, 4, 300)
    pred = np.where(r.random(300) < 0.6, y, r.integers(0, 4, 300))
    correct = sum(int(a == b) for a, b in zip(y, pred))
    assert accuracy(confusion_matrix(y, pred, 4)) == correct / 300


def test_perfect_binary():
    assert precision_recall_f1([[4, 0], [0, 6]]) == (1.0, 1.0, 1.0)


def test_per_class_hand_computation():
    cm = [[5, 2, 1],
          [1, 6, 3],
          [0, 2, 8]]
    p, r, f1 = per_class_prf(cm)
    tp = [5, 6, 8]
    col = [6, 10, 12]
    row = [8, 10, 10]
    for k in range(3):
        pk, rk = tp[k] / col[k], tp[k] / row[k]
        assert p[k] == pytest.approx(pk, rel=1e-15)
        assert r[k] == pytest.approx(rk, rel=1e-15)
        assert f1[k] == pytest.approx(2 * pk * rk / (pk + rk), rel=1e-15)
    macro = precision_recall_f1(cm, "macro")
    assert macro[2] == pytest.approx(sum(f1) / 3, rel=1e-15)
    weighted = precision_recall_f1(cm, "weighted")
    assert weighted[1] == pytest.approx(sum(tp) / 28, rel=1e-15)


def test_empty_class_contributes_zero():
    p, r, f1 = per_class_prf([[3, 0, 0], [0, 2, 0], [1, 0, 0]])
    assert p[2] == 0 and r[2] == 0 and f1[2] == 0


@settings(max_examples=100)
@given(st.integers(1, 50), st.integers(0, 50))
def test_f1_equals_p_when_p_equals_r(tp, off):
    # symmetric off-diagonals force FP == FN for both classes, so p == r
    cm = [[tp, off], [off, tp + 3]]
    p, r, f1 = per_class_prf(cm)
    assert np.allclose(p, r)
    assert np.allclose(f1, p, rtol=1e-14, atol=0)


def test_time_avg():
    assert time_avg([5]) == 5
    assert time_avg([1, 3]) == 2
    xs = np.random.default_rng(0).random(57) * 10
    assert time_avg(xs) == pytest.approx(sum(xs) / len(xs), rel=1e-14)
    with pytest.raises(DomainError):
        time_avg([])


# ---- aggregation ----------------------------------------------------------

def test_aggregate_two_runs():
    rep = aggregate([{"loss": 0.2}, {"loss": 0.4}])
    assert rep.loss_mean == pytest.approx(0.3)
    assert rep.loss_std == pytest.approx(0.1414, abs=1e-4)
    assert not rep.single_run


def test_aggregate_single_run_flag():
    rep = aggregate([{"loss": 0.2, "time": 3.0}])
    assert rep.single_run and rep.loss_std == 0 and rep.time_mean_s == 3.0


def test_aggregate_identical_runs():
    rep = aggregate([{"f1": 0.1}] * 7)
    assert rep.f1_std == 0 and rep.f1_mean == 0.1


@settings(max_examples=100)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=12))
def test_aggregate_invariants(xs):
    rep = aggregate([{"loss": x} for x in xs])
    assert min(xs) <= rep.loss_mean <= max(xs)
    assert rep.loss_std >= 0
    assert rep.raw["loss"] == xs


def test_report_record_rows():
    rep = aggregate([{m: 1.0 for m in ("loss", "accuracy", "precision", "recall", "f1", "time")}] * 2)
    assert isinstance(rep, MetricsReport)
    assert list(rep.to_record()) == summary_rows()
    assert len(summary_rows()) == 12


# ---- Wilcoxon -------------------------------------------------------------

@pytest.mark.parametrize("w,expected", [(4, 0.013672), (7, 0.037109), (8, 0.048828)])
def test_wilcoxon_reference_values(w, expected):
    diffs = diffs_with_statistic(w)
    res = wilcoxon_exact(diffs)
    assert res.statistic == w and res.n == 10
    assert round(res.pvalue, 6) == expected
    assert res.pvalue == brute_force_wilcoxon(diffs)[1]
    assert wilcoxon_null_pvalue(w, 10) == res.pvalue


def test_wilcoxon_exact_fractions():
    # counts over 1024 sign patterns: 14, 38, 50
    assert wilcoxon_null_pvalue(4, 10) == 14 / 1024
    assert wilcoxon_null_pvalue(7, 10) == 38 / 1024
    assert wilcoxon_null_pvalue(8, 10) == 50 / 1024


def test_wilcoxon_every_statistic_matches_enumeration():
    for w in range(0, 28):
        diffs = diffs_with_statistic(w)
        assert wilcoxon_exact(diffs).pvalue == brute_force_wilcoxon(diffs)[1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=2, max_size=11, unique=True),
       st.lists(st.booleans(), min_size=11, max_size=11))
def test_wilcoxon_random_vs_brute_force(mags, signs):
    diffs = [m if s else -m for m, s in zip(mags, signs)]
    res = wilcoxon_exact(diffs)
    w, p = brute_force_wilcoxon(diffs)
    assert res.statistic == w and res.pvalue == p
    assert res.t_plus + res.t_minus == len(diffs) * (len(diffs) + 1) / 2


@settings(max_examples=60)
@given(st.lists(st.floats(-50, 50).filter(lambda x: x != 0), min_size=2, max_size=15))
def test_wilcoxon_sign_flip_symmetry(diffs):
    a, b = wilcoxon_exact(diffs), wilcoxon_exact([-d for d in diffs])
    assert a.statistic == b.statistic and a.pvalue == b.pvalue
    assert 0 < a.pvalue <= 1


def test_wilcoxon_pvalue_monotone_in_statistic():
    ps = [wilcoxon_null_pvalue(w, 10) for w in range(28)]
    assert all(b >= a for a, b in zip(ps, ps[1:]))


def test_wilcoxon_zeros_and_ties():
    res = wilcoxon_exact([0.0, 1.0, -2.0, 3.0, 0.0])
    assert res.dropped_zeros == 2 and res.n == 3
    # tied magnitudes share mid-rank 1.5
    tied = wilcoxon_exact([1.0, -1.0, 2.0])
    assert tied.t_minus == 1.5 and tied.statistic == 1.5
    # doubled ranks (3, 3, 6): 3 of the 8 sign patterns give T+ <= 1.5
    assert tied.pvalue == 2 * 3 / 8


def test_wilcoxon_errors():
    with pytest.raises(DegenerateInputError):
        wilcoxon_exact([0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        wilcoxon_exact(np.arange(1, 22, dtype=float))
    with pytest.raises(ValueError):
        wilcoxon_exact([1.0, 2.0], alternative="greater")


# ---- percentage improvement ---------------------------------------------

def test_improvement_cases():
    assert percentage_improvement(10, 5) == 50.0
    assert percentage_improvement(0.8, 0.88, +1) == pytest.approx(10.0)
    with pytest.raises(DomainError):
        percentage_improvement(0.0, 1.0)


@pytest.mark.parametrize("row", list(REFERENCE_SUMMARY))
def test_reference_improvement_column(row):
    adam, fox, expected = REFERENCE_SUMMARY[row]
    got = percentage_improvement(adam, fox, row_direction(row))
    assert abs(got - expected) <= 0.01


def test_improvement_table_covers_all_rows():
    table = improvement_table({k: v[0] for k, v in REFERENCE_SUMMARY.items()},
                              {k: v[1] for k, v in REFERENCE_SUMMARY.items()})
    assert list(table) == summary_rows()


@settings(max_examples=200)
@given(st.floats(0.01, 1e4), st.floats(0.01, 1e4))
def test_improvement_sign_property(base, cand):
    assume(base != cand)
    lower = percentage_improvement(base, cand, -1)
    assert (lower > 0) == (cand < base)
    assert percentage_improvement(base, cand, +1) == pytest.approx(-lower)
    assert percentage_improvement(base, base, -1) == 0
