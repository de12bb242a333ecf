"""
Command-line front end.

    sparselts fit data.csv --response y [options]      -> fit.json
    sparselts predict fit.json data.csv [--raw]        -> predictions.csv
    sparselts simulate --scheme 1 --runs 100 [options] -> metrics.csv, metrics.json

Every command also writes manifest.json, and every output file carries the
manifest digest. Exit codes: 0 success, 1 numerical failure, 2 usage or
input error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .core import Dataset
from .lts import SparseLtsConfig
from .selection import select
from .simbench import (CONTAMINATIONS, ETAS, FULL_EXTREME_P, METHODS, SCHEMES, SchemeSpec, canonical,
                       run_experiment, to_csv, to_json)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad flags or bad input data; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- threads -----------------------------------------------------------------

def set_threads(requested: Optional[int]) -> int:
    """
    Set the number of worker threads for the restart loop. Falls back to the
    SPARSELTS_THREADS environment variable, and is capped at what the
    runtime provides. Results do not depend on this setting.
    """
    if requested is None:
        env = os.environ.get("SPARSELTS_THREADS")
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise UsageError("SPARSELTS_THREADS must be an integer, got %r" % env)
    if requested is None:
        return 0
    if requested < 1:
        raise UsageError("--threads must be at least 1")
    import numba
    n = min(requested, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


# --- CSV input -----------------------------------------------------------------

def read_table(path: str):
    """
    Read a comma-separated file with a header row into (names, matrix).
    Lines starting with '#' are skipped. Every cell must parse as a finite
    number.
    """
    p = Path(path)
    if not p.is_file():
        raise UsageError("%s: no such file" % path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError("%s: cannot read file (%s)" % (path, exc))
    lines = [(i + 1, line) for i, line in enumerate(text.splitlines())
             if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise UsageError("%s: file is empty" % path)
    try:
        rows = list(csv.reader([line for _, line in lines], strict=True))
    except csv.Error as exc:
        raise UsageError("%s: malformed CSV (%s)" % (path, exc))
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise UsageError("%s line %d: header names must be non-empty and unique" % (path, lines[0][0]))
    values = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:]):
        lineno = lines[r + 1][0]
        if len(row) != len(header):
            raise UsageError("%s line %d: expected %d fields, found %d"
                             % (path, lineno, len(header), len(row)))
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise UsageError("%s line %d column %d (%s): %r is not a finite number"
                                 % (path, lineno, c + 1, header[c], cell))
            values[r, c] = v
    return header, values


def file_digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- manifest and output -------------------------------------------------------

def make_manifest(command: str, options: dict, inputs: Sequence[str] = (),
                  wall_clock: Optional[float] = None) -> dict:
    return {
        "command": command,
        "options": options,
        "seed": options.get("seed"),
        "software": {"package": "sparselts", "version": __version__},
        "inputs": [{"name": Path(f).name, "sha256": file_digest(f)} for f in inputs],
        "wall_clock_seconds": wall_clock,
    }


def manifest_digest(manifest: dict) -> str:
    return hashlib.sha256(_dumps(manifest).encode()).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv_with_digest(body: str, digest: str) -> str:
    return "# manifest sha256=%s\n%s" % (digest, body)


def _sparse(slopes, names):
    return [{"index": int(j), "name": names[j], "value": float(slopes[j])}
            for j in np.flatnonzero(slopes)]


def _float_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


# --- fit -----------------------------------------------------------------------

def _config(args) -> SparseLtsConfig:
    try:
        return SparseLtsConfig(alpha=args.alpha, n_starts=args.starts, n_keep=args.keep,
                               delta=args.delta, seed=args.seed,
                               standardize=not getattr(args, "no_standardize", False))
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_fit(args) -> int:
    header, values = read_table(args.input)
    if args.response not in header:
        raise UsageError("response column %r not found; columns are: %s"
                         % (args.response, ", ".join(header)))
    j = header.index(args.response)
    names = header[:j] + header[j + 1:]
    if not names:
        raise UsageError("no predictor columns besides the response")
    n = values.shape[0]
    if n < 6:
        raise UsageError("need at least 6 observations, found %d" % n)
    if args.criterion == "cv" and not 2 <= args.folds <= n:
        raise UsageError("--folds must lie in [2, n]")
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    config = _config(args)
    data = Dataset(np.delete(values, j, axis=1), values[:, j])
    grid = None if args.lam is None else [args.lam]
    if args.lam is not None and not (math.isfinite(args.lam) and args.lam >= 0):
        raise UsageError("--lambda must be a finite nonnegative number")
    robust = config.h(n) < n
    options = {
        "response": args.response, "alpha": args.alpha, "lambda": args.lam,
        "criterion": args.criterion, "folds": args.folds, "repeats": args.repeats,
        "starts": args.starts, "keep": args.keep, "delta": args.delta, "seed": args.seed,
        "standardize": not args.no_standardize,
    }
    t0 = time.time()
    res = select(data, args.criterion, config, grid=grid, robust=robust, reweighted=True,
                 folds=args.folds, repetitions=args.repeats, standardize=not args.no_standardize)
    fit = res.best_fit
    if fit is None or not math.isfinite(fit.raw_scale):
        raise FloatingPointError("no grid point produced a valid fit")
    manifest = make_manifest("fit", options, [args.input],
                             time.time() - t0 if args.record_time else None)
    digest = manifest_digest(manifest)
    plain = config.h(n) == n
    report = {
        "manifest_sha256": digest,
        "estimator": "lasso" if plain else "sparse_lts",
        "n": n, "p": data.p, "h": fit.h,
        "response": args.response,
        "predictors": names,
        "predictor_scales": None if res.predictor_scales is None else res.predictor_scales.tolist(),
        "selection": {
            "criterion": res.criterion,
            "grid": res.grid.tolist(),
            "scores": [_float_or_none(s) for s in res.scores],
            "lambda": res.best_lambda,
            "failed_grid_points": res.failed,
        },
        "raw": {
            "intercept": fit.raw_coefficients.intercept,
            "coefficients": _sparse(fit.raw_coefficients.slopes, names),
            "center": fit.raw_center, "scale": fit.raw_scale,
            "objective": _float_or_none(fit.raw_objective),
            "fitted": fit.raw_coefficients.predict(data.X).tolist(),
        },
        "reweighted": {
            "intercept": fit.reweighted_coefficients.intercept,
            "coefficients": _sparse(fit.reweighted_coefficients.slopes, names),
            "center": fit.reweighted_center, "scale": fit.reweighted_scale,
            "fitted": fit.reweighted_coefficients.predict(data.X).tolist(),
        },
        "outliers": [int(i) for i in fit.outliers],
        "weights": [int(w) for w in fit.weights],
        "best_subset": [int(i) for i in fit.best_subset],
        "flags": {k: bool(v) for k, v in sorted(fit.flags.items())},
        "diagnostics": {
            "n_unconverged_fits": fit.diagnostics.get("n_unconverged_fits"),
            "n_capped_chains": fit.diagnostics.get("n_capped"),
            "n_converged_restarts": fit.n_converged_restarts,
            "n_distinct_final_subsets": fit.diagnostics.get("n_distinct_final_subsets"),
        },
    }
    out = Path(args.output_dir)
    _write(out / "manifest.json", _dumps(manifest))
    _write(out / "fit.json", _dumps(report))
    print("lambda %.6g, %d nonzero slopes, %d outliers -> %s"
          % (res.best_lambda, fit.reweighted_coefficients.df, fit.outliers.size, out / "fit.json"),
          file=sys.stderr)
    return EXIT_OK


# --- predict -------------------------------------------------------------------

def load_model(path: str) -> dict:
    try:
        model = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError("%s: not a readable fit report (%s)" % (path, exc))
    for key in ("predictors", "raw", "reweighted"):
        if key not in model:
            raise UsageError("%s: not a fit report (missing %r)" % (path, key))
    return model


def predict_values(model: dict, names: List[str], X: np.ndarray, raw: bool = False) -> np.ndarray:
    """Predictions of the model for a data matrix whose columns are ``names``."""
    predictors = model["predictors"]
    missing = [nm for nm in predictors if nm not in names]
    if missing:
        raise UsageError("data file lacks model columns: %s" % ", ".join(missing))
    part = model["raw" if raw else "reweighted"]
    slopes = np.zeros(len(predictors))
    for c in part["coefficients"]:
        slopes[c["index"]] = c["value"]
    cols = [names.index(nm) for nm in predictors]
    return part["intercept"] + X[:, cols] @ slopes


def cmd_predict(args) -> int:
    model = load_model(args.model)
    header, values = read_table(args.input)
    pred = predict_values(model, header, values, raw=args.raw)
    options = {"raw": bool(args.raw)}
    manifest = make_manifest("predict", options, [args.model, args.input])
    digest = manifest_digest(manifest)
    lines = ["row,prediction"] + ["%d,%r" % (i, float(v)) for i, v in enumerate(pred)]
    out = Path(args.output_dir)
    _write(out / "manifest.json", _dumps(manifest))
    _write(out / "predictions.csv", _csv_with_digest("\n".join(lines) + "\n", digest))
    print("%d predictions -> %s" % (pred.size, out / "predictions.csv"), file=sys.stderr)
    return EXIT_OK


# --- simulate ------------------------------------------------------------------

def _split(text: str) -> List[str]:
    return [t for t in (s.strip() for s in str(text).split(",")) if t]


def _specs(args) -> List[SchemeSpec]:
    try:
        schemes = [canonical(s, SCHEMES) for s in _split(args.scheme)]
        conts = [canonical(c, CONTAMINATIONS) for c in _split(args.contamination)]
    except ValueError as exc:
        raise UsageError(str(exc))
    try:
        etas = [float(e) for e in _split(args.eta)] if args.eta else list(ETAS)
    except ValueError:
        raise UsageError("--eta must be a comma-separated list of numbers")
    if not schemes or not conts:
        raise UsageError("give at least one scheme and one contamination setting")
    specs = []
    for s in schemes:
        p = FULL_EXTREME_P if (s == "extreme" and args.full_p) else None
        for c in conts:
            for e in (etas if c == "cluster" else [1.0]):
                specs.append(SchemeSpec(s, c, eta=e, p=p))
    return specs


def cmd_simulate(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    specs = _specs(args)
    try:
        methods = [canonical(m, METHODS) for m in _split(args.methods)]
    except ValueError as exc:
        raise UsageError(str(exc))
    config = _config(args)
    options = {
        "scheme": [s.scheme for s in specs][0] if len({s.scheme for s in specs}) == 1 else
        sorted({s.scheme for s in specs}),
        "cells": [{"scheme": s.scheme, "contamination": s.contamination,
                   "eta": s.eta if s.contamination == "cluster" else None, "n": s.n, "p": s.p}
                  for s in specs],
        "methods": methods, "runs": args.runs, "seed": args.seed, "alpha": args.alpha,
        "starts": args.starts, "keep": args.keep, "delta": args.delta, "full_p": bool(args.full_p),
    }
    t0 = time.time()

    def progress(spec, r):
        if not args.quiet:
            print("%s/%s%s run %d/%d" % (spec.scheme, spec.contamination,
                                         " eta=%g" % spec.eta if spec.contamination == "cluster" else "",
                                         r + 1, args.runs), file=sys.stderr, flush=True)

    rows = run_experiment(specs, methods, args.runs, args.seed, config, progress)
    manifest = make_manifest("simulate", options, [],
                             time.time() - t0 if args.record_time else None)
    digest = manifest_digest(manifest)
    out = Path(args.output_dir)
    _write(out / "manifest.json", _dumps(manifest))
    _write(out / "metrics.csv", _csv_with_digest(to_csv(rows), digest))
    _write(out / "metrics.json", to_json(rows, {"manifest_sha256": digest}) + "\n")
    for row in rows:
        print("%-8s %-9s %-5s %-15s rmspe %.3f  fpr %s  fnr %s"
              % (row.scheme, row.contamination, "" if row.eta is None else "%g" % row.eta, row.method,
                 row.rmspe, "-" if row.fpr is None else "%.3f" % row.fpr,
                 "-" if row.fnr is None else "%.3f" % row.fnr), file=sys.stderr)
    if any(r.n_failed for r in rows):
        return EXIT_NUMERICAL
    return EXIT_OK


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed of all random draws (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: SPARSELTS_THREADS or all cores)")
    common.add_argument("--output-dir", default=".", help="where output files go (default .)")
    common.add_argument("--record-time", action="store_true",
                        help="store wall-clock time in the manifest (outputs then differ between runs)")

    est = _Parser(add_help=False)
    est.add_argument("--alpha", type=float, default=0.75, help="fraction kept, h = floor((n+1) alpha)")
    est.add_argument("--starts", type=int, default=500, help="elemental starts (default 500)")
    est.add_argument("--keep", type=int, default=10, help="starts iterated to convergence (default 10)")
    est.add_argument("--delta", type=float, default=0.0125, help="outlier tail probability")

    parser = _Parser(prog="sparselts", description="Sparse least trimmed squares regression.")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", parents=[common, est], help="fit a CSV file")
    f.add_argument("input", help="CSV file with a header row")
    f.add_argument("--response", required=True, help="name of the response column")
    f.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed penalty (standardized predictor units), skipping selection")
    f.add_argument("--criterion", choices=("bic", "cv"), default="bic")
    f.add_argument("--folds", type=int, default=5)
    f.add_argument("--repeats", type=int, default=5)
    f.add_argument("--no-standardize", action="store_true",
                   help="penalize slopes in the units of the data")

    pr = sub.add_parser("predict", parents=[common], help="predict from a fit report")
    pr.add_argument("model", help="fit.json written by 'fit'")
    pr.add_argument("input", help="CSV file with the model's predictor columns")
    pr.add_argument("--raw", action="store_true", help="use the raw instead of the reweighted fit")

    s = sub.add_parser("simulate", parents=[common, est], help="run the simulation benchmark")
    s.add_argument("--scheme", default="1", help="1|2|3 or latent|moderate|extreme, comma-separated")
    s.add_argument("--contamination", default="none,vertical,leverage",
                   help="none|vertical|leverage|cluster (or 1-4), comma-separated")
    s.add_argument("--eta", default=None, help="leverage magnitudes for the cluster setting (default 1,7,13,19,25)")
    s.add_argument("--runs", type=int, default=100)
    s.add_argument("--methods", default=",".join(METHODS))
    s.add_argument("--full-p", action="store_true", help="scheme 3 with p = 20000 instead of 2000")
    s.add_argument("--quiet", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
    try:
        args = build_parser().parse_args(argv)
        set_threads(args.threads)
        handler: Dict[str, callable] = {"fit": cmd_fit, "predict": cmd_predict, "simulate": cmd_simulate}
        return handler[args.command](args)
    except UsageError as exc:
        print("sparselts: error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print("sparselts: numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print("sparselts: error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
