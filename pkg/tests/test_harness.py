import csv
import io
import json
import os
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foxtsage.harness import (
    ExperimentConfig,
    PairingError,
    compare,
    emit_reports,
    load_cell,
    load_config,
    parse_config_text,
    run_cell,
)
from foxtsage.harness.cli import main
from foxtsage.harness.report import summary_csv, summary_json, summary_md
from foxtsage.harness.runner import RunRecord
from foxtsage.metrics import METRICS, summary_rows

from test_metrics import REFERENCE_SUMMARY

SMALL = dict(dataset="synth", synth_n=200, synth_d=4, batch_size=32, runs=2)


def cfg(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


def fake_record(i, **metrics):
    return RunRecord("f", i, i, "x", metrics=dict(metrics), loss_curve=[1.0, 0.5])


def cell_from_columns(col):
    """Single-run cell whose mean row equals the reference mean column."""
    keys = {"Loss": "loss", "Accuracy": "accuracy", "Precision": "precision",
            "Recall": "recall", "F1-Score": "f1", "Time": "time"}
    return [fake_record(0, **{keys[r.rsplit(" ", 1)[0]]: v for r, v in col.items()
                              if r.endswith("Mean")})]


# ---- config -------------------------------------------------------------

def test_settings_expand():
    assert (cfg(setting=1).effective_iterations, cfg(setting=1).effective_population) == (5, 10)
    assert (cfg(setting=2).effective_iterations, cfg(setting=2).effective_population) == (50, 30)
    assert cfg(setting=1).baseline_epochs == 5
    assert cfg(setting=1, baseline_budget="total").baseline_epochs == 50
    with pytest.raises(ValueError):
        cfg(setting=3)


def test_run_seed_is_xor():
    c = cfg(seed=0b1010)
    assert [c.run_seed(i) for i in range(4)] == [10, 11, 8, 9]


def test_fingerprint_stable_and_sensitive():
    assert cfg().fingerprint() == cfg().fingerprint()
    assert cfg().fingerprint() == cfg(out="/tmp/elsewhere", workers=4).fingerprint()
    assert cfg().fingerprint() != cfg(seed=1).fingerprint()
    # an explicit preset value resolves to the same config
    assert cfg(iterations=5).fingerprint() == cfg().fingerprint()


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("# small run\noptimizer = adam\nruns = 3  # three seeds\nadam_lr = 0.01\niterations = none\n")
    assert parse_config_text(p.read_text())["adam_lr"] == 0.01
    c = load_config(p, runs="7", seed=4)
    assert (c.optimizer, c.runs, c.seed, c.adam_lr, c.iterations) == ("adam", 7, 4, 0.01, None)
    p.write_text("bogus = 1\n")
    with pytest.raises(KeyError):
        load_config(p)
    p.write_text("just words\n")
    with pytest.raises(ValueError):
        load_config(p)


# ---- run_cell -------------------------------------------------------------

def test_minimal_sgd_cell():
    recs = run_cell(cfg(optimizer="sgd", runs=1, epochs=1))
    assert len(recs) == 1 and recs[0].ok
    assert len(recs[0].loss_curve) == 1
    assert set(METRICS) <= set(recs[0].metrics)


@pytest.mark.parametrize("opt", ["sgd", "adam", "foxtsage"])
def test_cell_determinism(opt):
    c = cfg(optimizer=opt, iterations=2, population_size=3)
    a, b = run_cell(c), run_cell(c)
    strip = lambda m: {k: v for k, v in m.items() if k != "time"}
    assert [strip(r.metrics) for r in a] == [strip(r.metrics) for r in b]
    assert [r.loss_curve for r in a] == [r.loss_curve for r in b]
    assert a[0].metrics != a[1].metrics


def test_setting1_trace_shape():
    rec = run_cell(cfg(optimizer="foxtsage", setting=1, runs=1))[0]
    assert len(rec.trace) == 5 and len(rec.candidates) == 50
    assert sorted({c["iteration"] for c in rec.candidates}) == list(range(5))
    assert len(rec.loss_curve) == 5


def test_parallel_cell_matches_serial():
    a = run_cell(cfg(optimizer="foxtsage", iterations=2, population_size=4, runs=1))
    b = run_cell(cfg(optimizer="foxtsage", iterations=2, population_size=4, runs=1, workers=3))
    assert a[0].loss_curve == b[0].loss_curve
    assert {k: v for k, v in a[0].metrics.items() if k != "time"} == \
        {k: v for k, v in b[0].metrics.items() if k != "time"}


def test_load_failure_recorded(tmp_path):
    recs = run_cell(cfg(dataset="csv", csv_path=str(tmp_path / "missing.csv"), runs=3))
    assert len(recs) == 3 and all(r.status == "failed" for r in recs)
    assert "missing.csv" in recs[0].error


def test_divergence_recorded_and_cell_continues():
    recs = run_cell(cfg(optimizer="sgd", lr_base=1e308, epochs=2, synth_separation=50.0))
    assert all(r.status == "failed" for r in recs) and len(recs) == 2
    assert "non-finite" in recs[0].error


def test_cell_persisted_and_reloaded(tmp_path):
    c = cfg(optimizer="adam", epochs=2, out=str(tmp_path / "cell"))
    recs = run_cell(c)
    back = load_cell(tmp_path / "cell")
    assert [r.to_dict() for r in back] == [r.to_dict() for r in recs]
    meta = json.loads((tmp_path / "cell" / "config.json").read_text())
    assert meta["fingerprint"] == c.fingerprint()


def test_time_ratio_recorded():
    a = run_cell(cfg(optimizer="adam", runs=2))
    b = run_cell(cfg(optimizer="foxtsage", runs=2))
    cmp = compare(a, b)
    # 5 x 10 candidate epochs against 5 baseline epochs
    assert cmp.time_ratio is not None and cmp.time_ratio > 1
    assert json.loads(summary_json(cmp))["time_ratio"] == cmp.time_ratio


# ---- compare --------------------------------------------------------------

def test_identical_cells_degenerate():
    recs = [fake_record(i, loss=0.3 + i, accuracy=0.9, precision=0.8, recall=0.7, f1=0.75, time=1.0)
            for i in range(3)]
    cmp = compare(recs, recs)
    assert all(v == 0 for v in cmp.improvements.values())
    assert all(s["pvalue"] == 1 and s["degenerate"] for s in cmp.significance.values())


def test_reference_columns():
    adam = cell_from_columns({k: v[0] for k, v in REFERENCE_SUMMARY.items()})
    fox = cell_from_columns({k: v[1] for k, v in REFERENCE_SUMMARY.items()})
    cmp = compare(adam, fox, labels=("Adam", "Foxtsage"))
    for row in ("Loss Mean", "Accuracy Mean", "F1-Score Mean", "Time Mean"):
        assert abs(cmp.improvements[row] - REFERENCE_SUMMARY[row][2]) <= 0.01
    assert cmp.significance == {}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0.1, 10)), min_size=2, max_size=6))
def test_improvements_match_hand_formula(pairs):
    a = [fake_record(i, loss=x, accuracy=x / 20, precision=0.5, recall=0.5, f1=0.5, time=x)
         for i, (x, _) in enumerate(pairs)]
    b = [fake_record(i, loss=y, accuracy=y / 20, precision=0.5, recall=0.5, f1=0.5, time=y)
         for i, (_, y) in enumerate(pairs)]
    cmp = compare(a, b)
    ma, mb = np.mean([p[0] for p in pairs]), np.mean([p[1] for p in pairs])
    sa = statistics.stdev(p[0] for p in pairs)
    sb = statistics.stdev(p[1] for p in pairs)
    assert cmp.improvements["Loss Mean"] == pytest.approx((ma - mb) / ma * 100, rel=1e-9)
    assert cmp.improvements["Accuracy Mean"] == pytest.approx((mb - ma) / ma * 100, rel=1e-9)
    if sa > 0:
        assert cmp.improvements["Time StdDev"] == pytest.approx((sa - sb) / sa * 100, rel=1e-9, abs=1e-9)
    for rep, xs in ((cmp.baseline, [p[0] for p in pairs]), (cmp.candidate, [p[1] for p in pairs])):
        assert min(xs) <= rep.mean["loss"] <= max(xs)


def test_pairing_error():
    a = [fake_record(i, loss=1, accuracy=1, precision=1, recall=1, f1=1, time=1) for i in range(3)]
    with pytest.raises(PairingError):
        compare(a, a[:2])
    assert compare(a, a[:2], paired=False).significance == {}


# ---- emit_reports ---------------------------------------------------------

@pytest.fixture(scope="module")
def small_comparison():
    a = run_cell(cfg(optimizer="adam", epochs=3, runs=3))
    b = run_cell(cfg(optimizer="sgd", epochs=3, runs=3))
    return compare(a, b, labels=("adam", "sgd"))


def test_csv_roundtrip(small_comparison, tmp_path):
    emit_reports(small_comparison, tmp_path)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "summary.csv").read_text())))
    assert [r["metric"] for r in rows] == summary_rows()
    for parsed, row in zip(rows, small_comparison.rows()):
        assert float(parsed["adam"]) == row["adam"]
        assert float(parsed["improvement_pct"]) == row["improvement_pct"]
    runs = list(csv.DictReader(io.StringIO((tmp_path / "runs.csv").read_text())))
    assert len(runs) == 6
    assert float(runs[0]["accuracy"]) == small_comparison.records_a[0].metrics["accuracy"]


def test_md_row_count(small_comparison):
    md = summary_md(small_comparison)
    table = [l for l in md.splitlines() if l.startswith("| ") and not l.startswith("| Metric")]
    assert len(table) == len(summary_rows()) == 12
    assert "p = " in md


def test_series_lengths(small_comparison, tmp_path):
    emit_reports(small_comparison, tmp_path, formats=("json",))
    series = json.loads((tmp_path / "series.json").read_text())
    for label, recs in zip(("adam", "sgd"), (small_comparison.records_a, small_comparison.records_b)):
        for r in recs:
            curve = series[label]["loss_curves"][str(r.run_index)]
            assert len(curve["loss"]) == len(curve["epoch"]) == 3 == len(r.loss_curve)
        assert series[label]["accuracy_by_run"]["run"] == [0, 1, 2]
    assert json.loads((tmp_path / "summary.json").read_text())["runs"] == {"adam": 3, "sgd": 3}


def test_unwritable_output(small_comparison, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_reports(small_comparison, blocker / "sub")


def test_csv_renderer_matches_file(small_comparison, tmp_path):
    emit_reports(small_comparison, tmp_path, formats=("csv",))
    assert (tmp_path / "summary.csv").read_text() == summary_csv(small_comparison)


# ---- CLI ------------------------------------------------------------------

def test_cli_run_and_compare(tmp_path, capsys):
    conf = tmp_path / "exp.cfg"
    conf.write_text("dataset = synth\nsynth_n = 200\nsynth_d = 3\nruns = 2\n")
    assert main(["run", "--config", str(conf), "--optimizer", "adam", "--out", str(tmp_path / "a"),
                 "--set", "epochs=2"]) == 0
    first = json.loads(capsys.readouterr().out)
    assert first["ok"] == 2
    assert main(["run", "--config", str(conf), "--optimizer", "foxtsage", "--setting", "1",
                 "--set", "population_size=3", "--out", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    assert main(["compare", "--a", str(tmp_path / "a"), "--b", str(tmp_path / "b"),
                 "--format", "csv", "--out", str(tmp_path / "rep")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("metric,adam,foxtsage,improvement_pct")
    assert sorted(os.listdir(tmp_path / "rep")) == ["runs.csv", "series.json", "summary.csv"]


def test_cli_errors_are_json(tmp_path, capsys):
    assert main(["compare", "--a", str(tmp_path / "nope"), "--b", str(tmp_path / "nope")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError" and err["message"]
    assert main(["run", "--set", "optimizer=rmsprop"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ValueError"


def test_cli_run_with_bad_dataset_exits_nonzero(tmp_path, capsys):
    assert main(["run", "--dataset", "csv", "--set", f"csv_path={tmp_path}/none.csv",
                 "--runs", "1"]) == 1
    assert json.loads(capsys.readouterr().out)["ok"] == 0


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 6
