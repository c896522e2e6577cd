"""Classification metrics, run aggregation, and paired significance testing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DomainError


class DegenerateInputError(ValueError):
    pass


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total <= 0:
        raise DomainError("accuracy of an empty confusion matrix")
    return float(np.trace(cm) / total)


def per_class_prf(cm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall and F1. Zero denominators give 0."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    pred = cm.sum(axis=0)
    true = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(pred > 0, tp / pred, 0.0)
        r = np.where(true > 0, tp / true, 0.0)
        f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
    return p, r, f1


def precision_recall_f1(cm, averaging: str = "macro") -> tuple[float, float, float]:
    cm = np.asarray(cm)
    if cm.sum() <= 0:
        raise DomainError("precision/recall of an empty confusion matrix")
    p, r, f1 = per_class_prf(cm)
    if averaging == "macro":
        w = np.full(len(p), 1.0 / len(p))
    elif averaging == "weighted":
        support = cm.sum(axis=1).astype(np.float64)
        w = support / support.sum()
    else:
        raise ValueError(f"averaging must be 'macro' or 'weighted', got {averaging!r}")
    return float(w @ p), float(w @ r), float(w @ f1)


def time_avg(times) -> float:
    times = list(times)
    if not times:
        raise DomainError("time_avg of an empty sequence")
    return float(sum(times) / len(times))


METRICS = ("loss", "accuracy", "precision", "recall", "f1", "time")

# Row labels used by the summary tables.
METRIC_LABELS = {
    "loss": "Loss",
    "accuracy": "Accuracy",
    "precision": "Precision",
    "recall": "Recall",
    "f1": "F1-Score",
    "time": "Time",
}

# +1 when higher is better, -1 when lower is better. A StdDev row uses the
# same direction as its mean row.
DIRECTIONS = {"loss": -1, "accuracy": +1, "precision": +1, "recall": +1, "f1": +1, "time": -1}


def row_direction(row: str) -> int:
    for key, label in METRIC_LABELS.items():
        if row.startswith(label + " "):
            return DIRECTIONS[key]
    raise KeyError(f"no direction registered for row {row!r}")


def summary_rows() -> list[str]:
    return [f"{METRIC_LABELS[m]} {stat}" for m in METRICS for stat in ("Mean", "StdDev")]


@dataclass
class MetricsReport:
    """Per-metric mean and sample standard deviation over runs."""

    raw: dict[str, list[float]]
    mean: dict[str, float]
    std: dict[str, float]
    single_run: bool = False

    @property
    def n_runs(self) -> int:
        return len(next(iter(self.raw.values()), []))

    def __getattr__(self, name):
        # loss_mean, f1_std, time_mean_s, ...
        if name.endswith("_s"):
            name = name[:-2]
        for suffix, table in (("_mean", "mean"), ("_std", "std")):
            if name.endswith(suffix):
                key = name[: -len(suffix)]
                d = self.__dict__.get(table, {})
                if key in d:
                    return d[key]
        raise AttributeError(name)

    def to_record(self) -> dict[str, float]:
        """Flat mapping keyed by summary-table row names ("Loss Mean", ...)."""
        out = {}
        for m in METRICS:
            if m in self.mean:
                out[f"{METRIC_LABELS[m]} Mean"] = self.mean[m]
                out[f"{METRIC_LABELS[m]} StdDev"] = self.std[m]
        return out


def aggregate(runs) -> MetricsReport:
    """Aggregate a sequence of per-run metric dicts.

    Every run must carry the same keys. With a single run every std is 0 and
    ``single_run`` is set.
    """
    runs = list(runs)
    if not runs:
        raise DomainError("aggregate needs at least one run")
    keys = [k for k in runs[0] if isinstance(runs[0][k], (int, float))]
    raw = {k: [float(r[k]) for r in runs] for k in keys}
    mean = {k: float(np.mean(v)) for k, v in raw.items()}
    # np.mean can round a hair outside [min, max] for identical values
    mean = {k: min(max(mean[k], min(raw[k])), max(raw[k])) for k in keys}
    if len(runs) == 1:
        std = {k: 0.0 for k in keys}
    else:
        # identical values would otherwise pick up rounding noise from the mean
        std = {k: 0.0 if min(v) == max(v) else float(np.std(v, ddof=1)) for k, v in raw.items()}
    return MetricsReport(raw=raw, mean=mean, std=std, single_run=len(runs) == 1)


def percentage_improvement(baseline: float, candidate: float, direction: int = -1) -> float:
    """Relative change of ``candidate`` over ``baseline`` in percent.

    ``direction=-1`` (lower is better) gives ``(baseline - candidate) / baseline``,
    ``direction=+1`` gives ``(candidate - baseline) / baseline``.
    """
    if baseline == 0:
        raise DomainError("percentage improvement over a zero baseline")
    if direction not in (-1, 1):
        raise ValueError("direction must be -1 or +1")
    return direction * (candidate - baseline) / baseline * 100.0


def improvement_table(baseline: dict[str, float], candidate: dict[str, float]) -> dict[str, float]:
    """Direction-aware improvement for every row present in both records."""
    out = {}
    for row in baseline:
        if row in candidate:
            out[row] = percentage_improvement(baseline[row], candidate[row], row_direction(row))
    return out


def _signed_rank_counts(doubled_ranks: list[int]) -> np.ndarray:
    """Number of sign assignments giving each positive-rank sum.

    Ranks are doubled so tied mid-ranks stay integral; index ``s`` of the result
    counts assignments whose doubled positive-rank sum equals ``s``.
    """
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def _doubled_ranks(abs_diffs: np.ndarray) -> np.ndarray:
    order = np.argsort(abs_diffs, kind="stable")
    ranks2 = np.empty(len(abs_diffs), dtype=np.int64)
    sorted_vals = abs_diffs[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # mid-rank of 1-based positions i+1..j+1, doubled
        ranks2[order[i:j + 1]] = (i + 1) + (j + 1)
        i = j + 1
    return ranks2


@dataclass
class WilcoxonResult:
    statistic: float
    pvalue: float
    n: int
    dropped_zeros: int = 0
    t_plus: float = field(default=0.0)
    t_minus: float = field(default=0.0)

    def __iter__(self):
        return iter((self.statistic, self.pvalue))


def wilcoxon_exact(paired_diffs, alternative: str = "two-sided") -> WilcoxonResult:
    """Exact Wilcoxon signed-rank test.

    Zero differences are dropped. The statistic is ``min(T+, T-)`` and the
    two-sided p-value is ``min(1, 2 * P(T <= W))`` under the exact null
    distribution over all ``2**n`` equally likely sign assignments, with tied
    absolute differences sharing their mid-rank.
    """
    if alternative != "two-sided":
        raise ValueError("only the two-sided alternative is implemented")
    d = np.asarray(paired_diffs, dtype=np.float64)
    nonzero = d[d != 0]
    dropped = len(d) - len(nonzero)
    n = len(nonzero)
    if n == 0:
        raise DegenerateInputError("all paired differences are zero")
    if n > 20:
        raise DomainError(f"exact enumeration supports n <= 20, got {n}")
    if len(d) < 2:
        raise DomainError("need at least two paired differences")
    ranks2 = _doubled_ranks(np.abs(nonzero))
    t_plus2 = int(ranks2[nonzero > 0].sum())
    t_minus2 = int(ranks2[nonzero < 0].sum())
    w2 = min(t_plus2, t_minus2)
    counts = _signed_rank_counts([int(r) for r in ranks2])
    p = min(1.0, 2.0 * float(counts[: w2 + 1].sum()) / 2.0 ** n)
    return WilcoxonResult(w2 / 2.0, p, n, dropped, t_plus2 / 2.0, t_minus2 / 2.0)


def wilcoxon_null_pvalue(w: float, n: int) -> float:
    """Two-sided exact p-value for statistic ``w`` with ``n`` untied ranks."""
    counts = _signed_rank_counts([2 * r for r in range(1, n + 1)])
    return min(1.0, 2.0 * float(counts[: int(round(2 * w)) + 1].sum()) / 2.0 ** n)
