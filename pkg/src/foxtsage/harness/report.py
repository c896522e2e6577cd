"""Cell comparison and report emission (CSV / JSON / Markdown)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..metrics import (
    METRICS,
    DegenerateInputError,
    MetricsReport,
    aggregate,
    percentage_improvement,
    row_direction,
    summary_rows,
    wilcoxon_exact,
)
from ..numerics import DomainError
from .runner import RunRecord

TESTED_METRICS = ("loss", "accuracy", "precision", "recall", "f1")


class PairingError(ValueError):
    pass


@dataclass
class Comparison:
    baseline: MetricsReport
    candidate: MetricsReport
    improvements: dict[str, float | None]
    significance: dict[str, dict] = field(default_factory=dict)
    time_ratio: float | None = None
    records_a: list[RunRecord] = field(default_factory=list)
    records_b: list[RunRecord] = field(default_factory=list)
    labels: tuple[str, str] = ("baseline", "candidate")

    def rows(self) -> list[dict]:
        a, b = self.baseline.to_record(), self.candidate.to_record()
        return [
            {"metric": row, self.labels[0]: a[row], self.labels[1]: b[row],
             "improvement_pct": self.improvements.get(row)}
            for row in summary_rows() if row in a and row in b
        ]


def _metric_dicts(records):
    return [{m: r.metrics[m] for m in METRICS} for r in records if r.ok]


def compare(cell_a, cell_b, paired: bool = True, labels=("baseline", "candidate")) -> Comparison:
    """Aggregate two cells and compute improvements of ``cell_b`` over ``cell_a``.

    With ``paired=True`` each metric in ``TESTED_METRICS`` gets an exact
    Wilcoxon test over per-run differences (run ``i`` of A against run ``i``
    of B). All-zero differences are reported as ``p = 1`` with
    ``degenerate=True``.
    """
    a_runs, b_runs = _metric_dicts(cell_a), _metric_dicts(cell_b)
    if not a_runs or not b_runs:
        raise DomainError("both cells need at least one successful run")
    rep_a, rep_b = aggregate(a_runs), aggregate(b_runs)
    rec_a, rec_b = rep_a.to_record(), rep_b.to_record()
    improvements = {}
    for row in summary_rows():
        try:
            improvements[row] = percentage_improvement(rec_a[row], rec_b[row], row_direction(row))
        except DomainError:
            improvements[row] = 0.0 if rec_a[row] == rec_b[row] else None

    significance = {}
    if paired:
        if len(a_runs) != len(b_runs):
            raise PairingError(f"cannot pair {len(a_runs)} runs with {len(b_runs)} runs")
        if len(a_runs) >= 2:
            for m in TESTED_METRICS:
                diffs = [b[m] - a[m] for a, b in zip(a_runs, b_runs)]
                try:
                    res = wilcoxon_exact(diffs)
                    significance[m] = {"statistic": res.statistic, "pvalue": res.pvalue,
                                       "n": res.n, "degenerate": False}
                except DegenerateInputError:
                    significance[m] = {"statistic": 0.0, "pvalue": 1.0, "n": 0, "degenerate": True}
                except DomainError as exc:
                    significance[m] = {"statistic": None, "pvalue": None, "n": len(diffs),
                                       "degenerate": False, "note": str(exc)}

    ratio = rep_b.mean["time"] / rep_a.mean["time"] if rep_a.mean["time"] > 0 else None
    return Comparison(rep_a, rep_b, improvements, significance, ratio,
                      list(cell_a), list(cell_b), tuple(labels))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def summary_csv(cmp: Comparison) -> str:
    buf = io.StringIO()
    cols = ["metric", cmp.labels[0], cmp.labels[1], "improvement_pct"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in cmp.rows():
        w.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def summary_json(cmp: Comparison) -> str:
    doc = {
        "labels": list(cmp.labels),
        "summary": cmp.rows(),
        "significance": cmp.significance,
        "time_ratio": cmp.time_ratio,
        "runs": {cmp.labels[0]: cmp.baseline.n_runs, cmp.labels[1]: cmp.candidate.n_runs},
    }
    return json.dumps(doc, indent=2)


def summary_md(cmp: Comparison) -> str:
    a, b = cmp.labels
    lines = [f"| Metric | {a} | {b} | Improvement (%) |", "|---|---|---|---|"]
    for row in cmp.rows():
        imp = row["improvement_pct"]
        lines.append(f"| {row['metric']} | {row[a]:.6g} | {row[b]:.6g} | "
                     f"{'' if imp is None else f'{round(imp, 2) + 0.0:.2f}'} |")
    if cmp.significance:
        lines += ["", "Paired Wilcoxon signed-rank (two-sided, exact):", ""]
        for m, s in cmp.significance.items():
            if s["pvalue"] is None:
                lines.append(f"- {m}: not tested ({s.get('note', '')})")
            else:
                flag = " (all differences zero)" if s["degenerate"] else ""
                lines.append(f"- {m}: W = {s['statistic']:g}, p = {s['pvalue']:.6f}, n = {s['n']}{flag}")
    if cmp.time_ratio is not None:
        lines += ["", f"Time ratio {b}/{a}: {cmp.time_ratio:.2f}"]
    return "\n".join(lines) + "\n"


RENDERERS = {"csv": summary_csv, "json": summary_json, "md": summary_md}

RUN_COLUMNS = ["cell", "run_index", "seed", "status", "loss", "train_loss", "train_loss_sum",
               "accuracy", "precision", "recall", "f1", "time", "epochs"]


def runs_csv(cmp: Comparison) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RUN_COLUMNS, lineterminator="\n")
    w.writeheader()
    for label, recs in zip(cmp.labels, (cmp.records_a, cmp.records_b)):
        for r in recs:
            row = {"cell": label, "run_index": r.run_index, "seed": r.seed, "status": r.status,
                   "epochs": len(r.loss_curve)}
            for k in RUN_COLUMNS[4:-1]:
                row[k] = _fmt(r.metrics.get(k))
            w.writerow(row)
    return buf.getvalue()


def series_json(cmp: Comparison) -> str:
    """Plot-ready series: per-run loss curves and run-vs-accuracy."""
    doc = {}
    for label, recs in zip(cmp.labels, (cmp.records_a, cmp.records_b)):
        doc[label] = {
            "loss_curves": {str(r.run_index): {"epoch": list(range(1, len(r.loss_curve) + 1)),
                                               "loss": r.loss_curve} for r in recs},
            "accuracy_by_run": {"run": [r.run_index for r in recs if r.ok],
                                "accuracy": [r.metrics["accuracy"] for r in recs if r.ok]},
        }
    return json.dumps(doc, indent=1)


def emit_reports(cmp: Comparison, out_dir, formats=("csv", "json", "md")) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for fmt in formats:
        if fmt not in RENDERERS:
            raise ValueError(f"unknown report format {fmt!r}")
        p = out / f"summary.{fmt}"
        p.write_text(RENDERERS[fmt](cmp))
        written.append(p)
    for name, text in (("runs.csv", runs_csv(cmp)), ("series.json", series_json(cmp))):
        p = out / name
        p.write_text(text)
        written.append(p)
    return written
