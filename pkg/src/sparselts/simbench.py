"""
Simulation benchmark: data-generating processes, contamination settings,
prediction and selection metrics, and the experiment driver.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .core import Coefficients, Dataset, predictor_scales
from .lasso import lambda_max_pearson, lambda_max_robust
from .lts import SparseLtsConfig
from .selection import bic_from_fits, fit_grid, lambda_grid

SCHEMES = ("latent", "moderate", "extreme")
CONTAMINATIONS = ("none", "vertical", "leverage", "cluster")
METHODS = ("lasso", "raw_sparse_lts", "sparse_lts", "oracle")
ETAS = (1.0, 7.0, 13.0, 19.0, 25.0)
CONTAMINATION_FRACTION = 0.10

_ALIASES = {
    SCHEMES: {"1": "latent", "latentfactor": "latent", "latent_factor": "latent",
              "2": "moderate", "moderatehighdim": "moderate",
              "3": "extreme", "extremehighdim": "extreme"},
    CONTAMINATIONS: {"1": "none", "2": "vertical", "3": "leverage", "4": "cluster",
                     "vertical_outliers": "vertical", "leverage_points": "leverage",
                     "denseclusterleverage": "cluster", "dense_cluster": "cluster"},
}
_DEFAULT_SIZE = {"latent": (150, 50), "moderate": (100, 1000), "extreme": (100, 2000)}
FULL_EXTREME_P = 20_000


def canonical(name: str, valid: Sequence[str]) -> str:
    key = str(name).strip().lower()
    key = _ALIASES.get(tuple(valid), {}).get(key, key)
    if key not in valid:
        raise ValueError("unknown value %r, expected one of %s" % (name, ", ".join(valid)))
    return key


@dataclass(frozen=True)
class SchemeSpec:
    """
    One simulation cell. ``n`` and ``p`` default to the scheme's size
    (the extreme scheme runs at p = 2000 unless a larger p is asked for).
    """
    scheme: str = "latent"
    contamination: str = "none"
    eta: float = 1.0
    n: Optional[int] = None
    p: Optional[int] = None

    def __post_init__(self):
        s = canonical(self.scheme, SCHEMES)
        c = canonical(self.contamination, CONTAMINATIONS)
        object.__setattr__(self, "scheme", s)
        object.__setattr__(self, "contamination", c)
        n0, p0 = _DEFAULT_SIZE[s]
        if self.n is None:
            object.__setattr__(self, "n", n0)
        if self.p is None:
            object.__setattr__(self, "p", p0)
        if s == "latent" and self.p < 18:
            raise ValueError("the latent factor scheme needs p >= 18")
        if s == "moderate" and self.p < 11:
            raise ValueError("the moderate scheme needs p >= 11")
        if s == "extreme" and self.p < 10:
            raise ValueError("the extreme scheme needs p >= 10")

    @property
    def n_contaminated(self) -> int:
        if self.contamination == "none":
            return 0
        return int(math.floor(CONTAMINATION_FRACTION * self.n))


@dataclass
class Sample:
    """Clean training and test data plus what is needed to score estimates."""
    train: Dataset
    test: Dataset
    true_beta: Coefficients
    sigma: float
    train_signal: np.ndarray
    test_signal: np.ndarray


def ar1_normal(rng, n: int, p: int, rho: float) -> np.ndarray:
    """Rows from N(0, S) with S_ij = rho^|i-j|."""
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = z[:, 0]
    c = math.sqrt(1 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + c * z[:, j]
    return x


def _latent(rng, m, p, k=6, tau=0.3, delta=5.0):
    lat = rng.standard_normal((m, k))
    e = rng.standard_normal((m, p))
    X = np.empty((m, p))
    X[:, :k] = lat + tau * e[:, :k]
    for j in range(k, 3 * k):
        X[:, j] = lat[:, (j - k) // 2] + delta * e[:, j]
    X[:, 3 * k:] = e[:, 3 * k:]
    return X, lat.sum(axis=1)


def true_coefficients(spec: SchemeSpec) -> Coefficients:
    beta = np.zeros(spec.p)
    if spec.scheme == "latent":
        beta[:6] = 1.0
    elif spec.scheme == "moderate":
        beta[[0, 6]] = 1.5
        beta[1] = 0.5
        beta[[3, 10]] = 1.0
    else:
        beta[:10] = 1.0
    return Coefficients(0.0, beta)


def noise_sd(spec: SchemeSpec) -> float:
    return {"latent": math.sqrt(6) / 3, "moderate": 0.5, "extreme": 1.0}[spec.scheme]


def _draw(spec: SchemeSpec, rng, m: int):
    if spec.scheme == "latent":
        return _latent(rng, m, spec.p)
    beta = true_coefficients(spec).slopes
    if spec.scheme == "moderate":
        X = ar1_normal(rng, m, spec.p, 0.5)
    else:
        q = min(1000, spec.p)
        X = np.empty((m, spec.p))
        X[:, :q] = ar1_normal(rng, m, q, 0.6)
        X[:, q:] = rng.standard_normal((m, spec.p - q))
    return X, X @ beta


def generate(spec: SchemeSpec, rng) -> Sample:
    """
    Clean training sample and an independent clean test sample of the same
    size. For the latent factor scheme the signal is the sum of the latent
    factors, and the "true" coefficients mark the six low-noise proxies.
    """
    sigma = noise_sd(spec)
    Xtr, str_ = _draw(spec, rng, spec.n)
    ytr = str_ + sigma * rng.standard_normal(spec.n)
    Xte, ste = _draw(spec, rng, spec.n)
    yte = ste + sigma * rng.standard_normal(spec.n)
    return Sample(Dataset(Xtr, ytr), Dataset(Xte, yte), true_coefficients(spec), sigma, str_, ste)


def contaminate(train: Dataset, spec: SchemeSpec, rng, sigma: Optional[float] = None) -> Dataset:
    """
    Contaminate the last floor(0.1 n) observations.

    vertical: the errors are shifted by 20 so they follow N(20, sigma).
    leverage: as vertical, and the predictors are redrawn from N(50, 1).
    cluster: predictors from N(10, 0.01^2), response eta * x'gamma with
    gamma = (-1/p, ..., -1/p).
    """
    m = spec.n_contaminated
    if spec.contamination == "none" or m == 0:
        return train
    n, p = train.X.shape
    rows = np.arange(n - m, n)
    X = train.X.copy()
    y = train.y.copy()
    if spec.contamination in ("vertical", "leverage"):
        y[rows] += 20.0
        if spec.contamination == "leverage":
            X[rows] = rng.normal(50.0, 1.0, size=(m, p))
    else:
        Xt = rng.normal(10.0, 0.01, size=(m, p))
        X[rows] = Xt
        y[rows] = spec.eta * (Xt @ np.full(p, -1.0 / p))
    return Dataset(X, y)


def rmspe(coef: Coefficients, test: Dataset) -> float:
    """Root mean squared prediction error on test data, intercept included."""
    e = test.y - coef.predict(test.X)
    return float(math.sqrt(np.mean(e * e)))


def fpr_fnr(estimate: Coefficients, truth: Coefficients):
    """
    False positive and false negative rates of the estimated support.
    A rate whose denominator is empty is returned as None.
    """
    if estimate.p != truth.p:
        raise ValueError("estimate and truth differ in dimension")
    est = estimate.slopes != 0
    tru = truth.slopes != 0
    n0 = int((~tru).sum())
    n1 = int(tru.sum())
    fpr = float((est & ~tru).sum() / n0) if n0 else None
    fnr = float((~est & tru).sum() / n1) if n1 else None
    return fpr, fnr


@dataclass
class MetricsRow:
    scheme: str
    contamination: str
    eta: Optional[float]
    method: str
    rmspe: float
    se: float
    fpr: Optional[float]
    fnr: Optional[float]
    n_runs: int
    n_failed: int = 0

    def as_dict(self):
        return asdict(self)


COLUMNS = ("scheme", "contamination", "eta", "method", "rmspe", "se", "fpr", "fnr", "n_runs", "n_failed")


def run_seed(seed: int, run: int):
    """Independent random stream for one simulation run."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(run)]))


def evaluate_run(spec: SchemeSpec, methods: Sequence[str], seed: int, run: int,
                 config: SparseLtsConfig = SparseLtsConfig()) -> Dict[str, dict]:
    """
    One simulation run: generate, contaminate, select the penalty by BIC for
    each method, and score on the clean test data.
    Returns {method: {"rmspe", "fpr", "fnr", "lambda"}}.
    """
    rng = run_seed(seed, run)
    sample = generate(spec, rng)
    train = contaminate(sample.train, spec, rng, sample.sigma)
    lts_seed = int(rng.integers(0, 2 ** 31 - 1))
    out = {}
    if "oracle" in methods:
        e = sample.test.y - sample.test_signal
        out["oracle"] = {"rmspe": float(math.sqrt(np.mean(e * e))), "fpr": None, "fnr": None,
                         "lambda": None}
    if "lasso" in methods:
        res = _bic_path(train, replace(config, alpha=1.0, seed=lts_seed), robust=False)[0]
        out["lasso"] = _score(res.best_fit.raw_coefficients, sample, res.best_lambda)
    wanted = [m for m in ("raw_sparse_lts", "sparse_lts") if m in methods]
    if wanted:
        results = _bic_path(train, replace(config, seed=lts_seed), robust=True,
                            reweighted=[m == "sparse_lts" for m in wanted])
        for m, res in zip(wanted, results):
            out[m] = _score(res.best_fit.coefficients(m == "sparse_lts"), sample, res.best_lambda)
    return out


def _bic_path(train, config, robust, reweighted=(False,)):
    """
    Fit the whole grid once on predictors divided by their (robust) scales
    and pick a penalty by BIC for each requested coefficient set.
    """
    scales = predictor_scales(train.X, robust)
    scaled = Dataset(train.X / scales, train.y)
    if robust:
        lam0 = lambda_max_robust(scaled, standardize=config.standardize)
    else:
        lam0 = lambda_max_pearson(scaled, standardize=config.standardize)
    grid = lambda_grid(lam0, scaled.p, scaled.n)
    fits, failed = fit_grid(scaled, grid, config)
    fits = [None if f is None else f.unscaled(scales) for f in fits]
    return [bic_from_fits(grid, fits, scaled.n, rw, failed) for rw in reweighted]


def _score(coef, sample, lam):
    fpr, fnr = fpr_fnr(coef, sample.true_beta)
    return {"rmspe": rmspe(coef, sample.test), "fpr": fpr, "fnr": fnr, "lambda": float(lam)}


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(spec: SchemeSpec, method: str, results: List[Optional[dict]]) -> MetricsRow:
    ok = [r for r in results if r is not None]
    rm = np.array([r["rmspe"] for r in ok], dtype=float)
    se = float(rm.std(ddof=1) / math.sqrt(rm.size)) if rm.size > 1 else float("nan")
    eta = spec.eta if spec.contamination == "cluster" else None
    return MetricsRow(spec.scheme, spec.contamination, eta, method,
                      float(rm.mean()) if rm.size else float("nan"), se,
                      _mean([r["fpr"] for r in ok]), _mean([r["fnr"] for r in ok]),
                      len(ok), len(results) - len(ok))


def run_experiment(specs: Iterable[SchemeSpec], methods: Sequence[str], n_runs: int, seed: int,
                   config: SparseLtsConfig = SparseLtsConfig(), progress=None) -> List[MetricsRow]:
    """
    Average RMSPE, FPR and FNR over ``n_runs`` runs for every cell and
    method. Run r of every cell draws its clean data from the stream
    (seed, r), so cells differing only in contamination share clean samples.
    A run whose fit fails is counted in ``n_failed`` and left out of the
    averages.
    """
    methods = [canonical(m, METHODS) for m in methods]
    if n_runs < 1:
        raise ValueError("n_runs must be positive")
    rows = []
    if not methods:
        return rows
    for spec in specs:
        per_method = {m: [] for m in methods}
        for r in range(n_runs):
            try:
                res = evaluate_run(spec, methods, seed, r, config)
            except (ValueError, FloatingPointError, np.linalg.LinAlgError, AttributeError):
                res = {}
            for m in methods:
                per_method[m].append(res.get(m))
            if progress is not None:
                progress(spec, r)
        for m in methods:
            rows.append(summarize(spec, m, per_method[m]))
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        d = row.as_dict()
        w.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def to_json(rows: Sequence[MetricsRow], extra: Optional[dict] = None) -> str:
    doc = {"columns": list(COLUMNS), "rows": [r.as_dict() for r in rows]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)
