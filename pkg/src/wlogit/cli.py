"""Command-line front end: fit, predict, simulate, ic-check, cv, version.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every failure prints one machine-parsable line on stderr of the form
``wlogit: error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from ._ioutil import atomic_write_text
from .diagnostics import ic_violation, whitening_gap
from .errors import DataError, NumericError, UsageError, WLogitError
from .glm import Dataset, standardize_columns
from .pipeline import (
    FitConfig,
    build_whitening,
    fit as pipeline_fit,
    load_model,
    predict as pipeline_predict,
    save_model,
    whiten,
)
from .simbench import ScenarioConfig, kfold_cv_auc, run_scenario

__all__ = ["CsvDataset", "read_csv_dataset", "main"]


@dataclass
class CsvDataset:
    """Parsed CSV: feature names, the label column name, and the data."""

    feature_names: list[str]
    label_column: str
    data: Dataset


def read_csv_dataset(path, label_column: str) -> CsvDataset:
    """Parse a headered CSV of numeric features plus one 0/1 label column.

    Rows are samples. Malformed cells raise with the offending row and
    column named; missing cells are rejected.
    """
    header, rows = _read_csv_rows(path)
    if label_column not in header:
        raise DataError(f"label column {label_column!r} not found in header")
    li = header.index(label_column)
    names = [h for i, h in enumerate(header) if i != li]
    n = len(rows)
    if n < 2:
        raise DataError(f"need at least 2 data rows, got {n}")
    x = np.empty((n, len(names)))
    y = np.empty(n)
    for r, (rnum, row) in enumerate(rows):
        col = 0
        for i, cell in enumerate(row):
            if i == li:
                y[r] = _parse_label(cell, rnum, header[li])
            else:
                x[r, col] = _parse_number(cell, rnum, header[i])
                col += 1
    return CsvDataset(names, label_column, Dataset(x, y))


def _read_csv_rows(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise DataError("duplicate column names in header")
        rows = []
        for rnum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {rnum}: expected {len(header)} cells, got {len(row)}"
                )
            rows.append((rnum, row))
    return header, rows


def _parse_label(cell, rnum, colname):
    text = cell.strip()
    if text in ("0", "1"):
        return float(text)
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"row {rnum}, column {colname!r}: label {cell!r} is not 0 or 1"
        ) from None
    if value not in (0.0, 1.0):
        raise DataError(
            f"row {rnum}, column {colname!r}: label {cell!r} is not 0 or 1"
        )
    return value


def _parse_number(cell, rnum, colname):
    text = cell.strip()
    if not text:
        raise DataError(f"row {rnum}, column {colname!r}: missing value")
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"row {rnum}, column {colname!r}: cannot parse {cell!r} as a number"
        ) from None
    if not np.isfinite(value):
        raise DataError(f"row {rnum}, column {colname!r}: non-finite value {cell!r}")
    return value


def read_csv_matrix(path, drop_column: str | None = None):
    """Parse a headered numeric CSV without labels; returns (names, X)."""
    header, rows = _read_csv_rows(path)
    di = None
    if drop_column is not None:
        if drop_column not in header:
            raise DataError(f"column {drop_column!r} not found in header")
        di = header.index(drop_column)
    names = [h for i, h in enumerate(header) if i != di]
    x = np.empty((len(rows), len(names)))
    for r, (rnum, row) in enumerate(rows):
        col = 0
        for i, cell in enumerate(row):
            if i == di:
                continue
            x[r, col] = _parse_number(cell, rnum, header[i])
            col += 1
    return names, x


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through UsageError
    # so usage problems map to exit code 1 instead
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="wlogit", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p_fit = sub.add_parser("fit", help="fit a model on a CSV dataset")
    p_fit.add_argument("--data", required=True, help="CSV with features + label column")
    p_fit.add_argument("--label", required=True, help="name of the 0/1 label column")
    p_fit.add_argument("--gamma", type=float, default=0.95)
    p_fit.add_argument("--n-lambda", type=int, default=30)
    p_fit.add_argument("--lambda-min-ratio", type=float, default=0.01)
    p_fit.add_argument(
        "--h-convention",
        default="fisher",
        choices=["fisher", "odds", "literal"],
        help="whitening weight: fisher = pi(1-pi); odds = pi/(1-pi) ('literal' is an alias)",
    )
    p_fit.add_argument("--no-standardize", action="store_true")
    p_fit.add_argument("--out", default=None, help="write the model JSON here")

    p_pred = sub.add_parser("predict", help="score new samples with a saved model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--label", default=None, help="label column to ignore, if present")
    p_pred.add_argument("--threshold", type=float, default=0.5)
    p_pred.add_argument("--out", required=True, help="output CSV path")

    p_sim = sub.add_parser("simulate", help="run benchmark scenarios from a TOML config")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("WLOGIT_THREADS", os.cpu_count() or 1)),
        help="worker processes (env WLOGIT_THREADS overrides the default)",
    )

    p_ic = sub.add_parser("ic-check", help="incoherence diagnostics for a support set")
    p_ic.add_argument("--data", required=True)
    p_ic.add_argument("--label", required=True)
    p_ic.add_argument("--support", default=None, help="comma-separated indices or names")
    p_ic.add_argument("--truth-file", default=None, help="file with one index/name per line")
    p_ic.add_argument("--h-convention", default="fisher", choices=["fisher", "odds", "literal"])
    p_ic.add_argument("--no-standardize", action="store_true")

    p_cv = sub.add_parser("cv", help="stratified k-fold AUC")
    p_cv.add_argument("--data", required=True)
    p_cv.add_argument("--label", required=True)
    p_cv.add_argument("--k", type=int, default=10)
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--method", default="wlogit", choices=["wlogit", "lasso"])
    p_cv.add_argument("--roc-out", default="roc_points.csv", help="ROC points CSV path")

    sub.add_parser("version", help="print the version")
    return parser


def _canonical_h(value: str) -> str:
    return "odds" if value == "literal" else value


def _cmd_fit(args) -> int:
    csvd = read_csv_dataset(args.data, args.label)
    cfg = FitConfig(
        gamma=args.gamma,
        n_lambda=args.n_lambda,
        lambda_min_ratio=args.lambda_min_ratio,
        h_convention=_canonical_h(args.h_convention),
        standardize=not args.no_standardize,
    )
    model = pipeline_fit(csvd.data, cfg)
    model.feature_names = csvd.feature_names
    if args.out:
        save_model(model, args.out)
    support = [int(i) for i in model.support]
    print(f"lambda_hat={model.lambda_hat!r}")
    print(f"K_hat={model.k_hat}")
    print(f"M_hat={model.m_hat}")
    print(f"support_size={len(support)}")
    print("support_indices=" + ",".join(str(i) for i in support))
    print("support_names=" + ",".join(csvd.feature_names[i] for i in support))
    print(f"loglik={model.loglik!r}")
    if args.out:
        print(f"model_written={args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    names, x = read_csv_matrix(args.data, drop_column=args.label)
    if model.feature_names:
        if set(model.feature_names) <= set(names):
            pos = [names.index(f) for f in model.feature_names]
            x = x[:, pos]
        elif len(names) != len(model.feature_names):
            raise DataError(
                "input columns do not match the model's features "
                f"({len(names)} given, {len(model.feature_names)} expected)"
            )
    elif x.shape[1] != model.beta_hat.shape[0]:
        raise DataError(
            f"input has {x.shape[1]} feature columns, model expects "
            f"{model.beta_hat.shape[0]}"
        )
    probs, labels = pipeline_predict(model, x, args.threshold)
    lines = ["sample,probability,label"]
    for i, (pr, lb) in enumerate(zip(probs, labels)):
        lines.append(f"{i},{pr!r},{lb}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"predictions_written={args.out}")
    print(f"n_samples={len(probs)}")
    return 0


def _scenario_from_table(table: dict, defaults: dict) -> ScenarioConfig:
    merged = dict(defaults)
    merged.update(table)
    if "name" not in merged:
        raise DataError("every [[scenario]] table needs a name")
    if "alphas" in merged:
        merged["alphas"] = tuple(float(a) for a in merged["alphas"])
    known = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(merged) - known
    if unknown:
        raise DataError(f"unknown scenario keys: {sorted(unknown)}")
    if "h_convention" in merged:
        merged["h_convention"] = _canonical_h(merged["h_convention"])
    return ScenarioConfig(**merged)


def _cmd_simulate(args) -> int:
    try:
        with open(args.config, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open {args.config}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"config parse error: {exc}") from exc
    tables = doc.get("scenario", [])
    if not tables:
        raise DataError("config defines no [[scenario]] tables")
    defaults = doc.get("defaults", {})
    scenarios = [_scenario_from_table(t, defaults) for t in tables]
    all_rows = []
    all_aggs = []
    for cfg in scenarios:
        table = run_scenario(cfg, threads=max(1, args.threads))
        all_rows.extend(table.rows)
        all_aggs.extend(table.aggregates)
        for agg in table.aggregates:
            print(
                f"scenario={agg.scenario} method={agg.method} n={agg.n} "
                f"tpr={agg.tpr_mean:.4f} fpr={agg.fpr_mean:.4f} auc={agg.auc_mean:.4f}"
            )
    from .simbench import ResultTable

    combined = ResultTable(all_rows, all_aggs)
    out = Path(args.out)
    combined.write(out / "results.csv", out / "aggregate.csv")
    print(f"results_written={out / 'results.csv'}")
    print(f"aggregate_written={out / 'aggregate.csv'}")
    return 0


def _parse_support(args, names) -> list[int]:
    tokens: list[str] = []
    if args.support:
        tokens = [t.strip() for t in args.support.split(",") if t.strip()]
    elif args.truth_file:
        try:
            with open(args.truth_file) as fh:
                tokens = [line.strip() for line in fh if line.strip()]
        except OSError as exc:
            raise DataError(f"cannot open {args.truth_file}: {exc.strerror}") from exc
    if not tokens:
        raise UsageError("ic-check needs --support or --truth-file")
    indices = []
    for tok in tokens:
        try:
            indices.append(int(tok))
        except ValueError:
            if tok not in names:
                raise DataError(f"unknown feature {tok!r} in support") from None
            indices.append(names.index(tok))
    return indices


def _cmd_ic_check(args) -> int:
    csvd = read_csv_dataset(args.data, args.label)
    support = _parse_support(args, csvd.feature_names)
    data = csvd.data
    x = data.X
    if not args.no_standardize:
        x, _, _ = standardize_columns(x)
        data = Dataset(x, data.y)
    transform = build_whitening(data, h_convention=_canonical_h(args.h_convention))
    before = ic_violation(x, transform.h_diag, support)
    x_tilde = whiten(x, transform)
    after = ic_violation(x_tilde, transform.h_diag, support)
    print(f"d={before.d}")
    print("support=" + ",".join(str(i) for i in before.support))
    print(f"before.violation_fraction_rows={before.violation_fraction_rows!r}")
    print(f"before.max_row_sum={before.max_row_sum!r}")
    print(f"after.violation_fraction_rows={after.violation_fraction_rows!r}")
    print(f"after.max_row_sum={after.max_row_sum!r}")
    print(f"whitening_gap={whitening_gap(x_tilde, transform.h_diag)!r}")
    return 0


def _cmd_cv(args) -> int:
    csvd = read_csv_dataset(args.data, args.label)
    result = kfold_cv_auc(csvd.data, args.k, method=args.method, seed=args.seed)
    for i, a in enumerate(result.fold_aucs):
        print(f"fold_{i}_auc={a!r}")
    print(f"pooled_auc={result.pooled_auc!r}")
    lines = ["fpr,tpr"] + [f"{fpr!r},{tpr!r}" for fpr, tpr in result.roc]
    atomic_write_text(args.roc_out, "\n".join(lines) + "\n")
    print(f"roc_written={args.roc_out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (try --help)")
        if args.command == "version":
            print(f"wlogit {__version__}")
            return 0
        handler = {
            "fit": _cmd_fit,
            "predict": _cmd_predict,
            "simulate": _cmd_simulate,
            "ic-check": _cmd_ic_check,
            "cv": _cmd_cv,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"wlogit: error: usage: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"wlogit: error: data: {exc}", file=sys.stderr)
        return 2
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"wlogit: error: numeric: {exc}", file=sys.stderr)
        return 3
    except WLogitError as exc:
        print(f"wlogit: error: data: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
