"""Command line front end.

    foxtsage run --config exp.cfg --optimizer adam --setting 1 --seed 0 --out runs/adam
    foxtsage compare --a runs/adam --b runs/fox --format md
    foxtsage selftest

Errors are reported on stderr as one JSON object and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import DATA_DIR_ENV, load_config
from .report import RENDERERS, compare, emit_reports
from .runner import load_cell, run_cell


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="foxtsage", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment cell",
                         epilog=f"Dataset paths resolve against ${DATA_DIR_ENV} (default ./data).")
    run.add_argument("--config", help="flat key = value config file")
    run.add_argument("--dataset", choices=["mnist", "idx", "csv", "synth"])
    run.add_argument("--optimizer", choices=["foxtsage", "adam", "sgd"])
    run.add_argument("--model", choices=["logreg", "logreg_dropout", "mlp"])
    run.add_argument("--setting", type=int, choices=[1, 2])
    run.add_argument("--seed", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--out")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override any config key (repeatable)")

    cmp = sub.add_parser("compare", help="compare two cells (A = baseline, B = candidate)")
    cmp.add_argument("--a", required=True)
    cmp.add_argument("--b", required=True)
    cmp.add_argument("--format", choices=sorted(RENDERERS), default="md")
    cmp.add_argument("--out", help="also write summary, runs.csv and series.json here")
    cmp.add_argument("--unpaired", action="store_true", help="skip the paired Wilcoxon test")

    sub.add_parser("selftest", help="run the built-in oracle checks")
    return ap


def _cmd_run(args) -> int:
    overrides = {}
    for item in args.set:
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    for key in ("dataset", "optimizer", "model", "setting", "seed", "runs", "out"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    cfg = load_config(args.config, **overrides)
    records = run_cell(cfg)
    ok = sum(r.ok for r in records)
    print(json.dumps({"fingerprint": cfg.fingerprint(), "runs": len(records), "ok": ok,
                      "out": cfg.out}))
    return 0 if ok else 1


def _cmd_compare(args) -> int:
    a, b = load_cell(args.a), load_cell(args.b)
    labels = (a[0].optimizer if a else "a", b[0].optimizer if b else "b")
    if labels[0] == labels[1]:
        labels = ("a", "b")
    result = compare(a, b, paired=not args.unpaired, labels=labels)
    sys.stdout.write(RENDERERS[args.format](result))
    if args.out:
        emit_reports(result, args.out, formats=(args.format,))
    return 0


def _cmd_selftest(args) -> int:
    from ..selftest import run
    return 0 if run() else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "compare": _cmd_compare, "selftest": _cmd_selftest}[args.command]
    try:
        return handler(args)
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
