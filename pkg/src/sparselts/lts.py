"""
Sparse least trimmed squares: the lasso fitted on the h-subset with the
smallest penalized residual sum of squares, found by concentration steps
from many elemental starts, followed by a reweighting step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from . import _kernels
from .core import Coefficients, Dataset, as_index_set, h_smallest_indices, residuals, trimmed_sum
from .lasso import DEFAULT_MAX_ITER, DEFAULT_TOL, LassoConfig, lasso_fit, lasso_objective


@dataclass(frozen=True)
class SparseLtsConfig:
    """
    Settings of the sparse LTS estimator.

    alpha : fraction of observations kept, h = floor((n + 1) * alpha) capped at n.
    lam : penalty parameter.
    n_starts : number of elemental starts.
    n_keep : number of best starts iterated to convergence.
    n_initial_csteps : C-steps applied to every start before ranking.
    delta : tail probability defining the outlier cutoff qnorm(1 - delta).
    seed : seed of the elemental-subset draws.
    max_csteps : cap on C-steps for the kept chains.
    standardize : standardize the predictors on every subset before the
        lasso fit, i.e. penalize sum_j s_j |beta_j| with s_j the standard
        deviation of predictor j on the subset (see LassoConfig).
    """
    alpha: float = 0.75
    lam: float = 0.0
    n_starts: int = 500
    n_keep: int = 10
    n_initial_csteps: int = 2
    delta: float = 0.0125
    seed: int = 0
    tolerance: float = DEFAULT_TOL
    max_iterations: int = DEFAULT_MAX_ITER
    max_csteps: int = 100
    standardize: bool = True

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0.5, 1], got %r" % (self.alpha,))
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.n_starts < 1 or self.n_keep < 1:
            raise ValueError("n_starts and n_keep must be positive")
        if self.n_keep > self.n_starts:
            raise ValueError("n_keep cannot exceed n_starts")
        if self.n_initial_csteps < 0:
            raise ValueError("n_initial_csteps must be nonnegative")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")

    def h(self, n: int) -> int:
        h = min(int(math.floor((n + 1) * self.alpha)), n)
        if h < 3:
            raise ValueError("h = %d is below 3 for n = %d" % (h, n))
        return h

    def with_lambda(self, lam: float) -> "SparseLtsConfig":
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class SubsetFit:
    """An h-subset, its lasso coefficients and the penalized trimmed objective."""
    subset: np.ndarray
    coefficients: Coefficients
    objective: float


@dataclass
class SparseLtsFit:
    raw_coefficients: Coefficients
    raw_center: float
    raw_scale: float
    weights: np.ndarray
    reweighted_coefficients: Coefficients
    reweighted_center: float
    reweighted_scale: float
    lam: float
    h: int
    best_subset: np.ndarray
    n_converged_restarts: int
    raw_objective: float = float("nan")
    flags: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_w(self) -> int:
        return int(self.weights.sum())

    @property
    def outliers(self) -> np.ndarray:
        return np.flatnonzero(self.weights == 0)

    def coefficients(self, reweighted: bool = True) -> Coefficients:
        return self.reweighted_coefficients if reweighted else self.raw_coefficients

    def scale(self, reweighted: bool = True) -> float:
        return self.reweighted_scale if reweighted else self.raw_scale

    def unscaled(self, scales) -> "SparseLtsFit":
        """
        The same fit for predictors measured in original units, when it was
        computed on predictors divided by ``scales``. Residuals, scales and
        weights do not change.
        """
        scales = np.asarray(scales, dtype=float)
        raw = Coefficients(self.raw_coefficients.intercept, self.raw_coefficients.slopes / scales)
        rw = Coefficients(self.reweighted_coefficients.intercept,
                          self.reweighted_coefficients.slopes / scales)
        return replace(self, raw_coefficients=raw, reweighted_coefficients=rw,
                       flags=dict(self.flags), diagnostics=dict(self.diagnostics))


def objective(data: Dataset, subset, coef: Coefficients, lam: float, standardize: bool = True) -> float:
    """
    Sum of squared residuals over the subset H plus h * lam * sum_j s_j |slope_j|,
    with s_j the standard deviation of predictor j on H (1 without
    ``standardize``).
    """
    return lasso_objective(data, coef, lam, as_index_set(subset, data.n), standardize=standardize)


def elemental_subsets(n: int, n_starts: int, seed: int) -> np.ndarray:
    """
    Draw ``n_starts`` triples of distinct row indices, uniformly.

    All draws come from one stream seeded by ``seed`` and are made before any
    fitting, so the result does not depend on how the starts are scheduled.
    """
    if n < 3:
        raise ValueError("need at least 3 observations")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, n, n_starts)
    b = rng.integers(0, n - 1, n_starts)
    b = b + (b >= a)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    c = rng.integers(0, n - 2, n_starts)
    c = c + (c >= lo)
    c = c + (c >= hi)
    return np.stack([a, b, c], axis=1).astype(np.int64)


def _fit(data, idx, lam, init, config):
    b0, beta, _, conv = _kernels.lasso_cd(
        data.fortran_X, data.y, np.ones(data.n), idx, float(lam), init,
        float(config.tolerance), int(config.max_iterations), bool(config.standardize))
    return Coefficients(b0, beta), bool(conv)


def elemental_start(data: Dataset, config: SparseLtsConfig, triple=None, start: int = 0) -> SubsetFit:
    """
    Initial h-subset from an elemental subset of three observations.

    The lasso is fitted on the three rows, the h observations with smallest
    squared residuals form the subset, and the lasso is refitted there. The
    triple is either given or taken as start number ``start`` of
    ``elemental_subsets(n, start + 1, config.seed)``.
    """
    h = config.h(data.n)
    if triple is None:
        triple = elemental_subsets(data.n, start + 1, config.seed)[start]
    rows3 = as_index_set(triple, data.n)
    if rows3.size != 3:
        raise ValueError("an elemental subset has 3 rows")
    b0, beta, _, _ = _kernels.lasso_homotopy(data.fortran_X, data.y, rows3, float(config.lam),
                                             bool(config.standardize))
    r = residuals(data, Coefficients(b0, beta))
    H = h_smallest_indices(r * r, h)
    coef, _ = _fit(data, H, config.lam, beta, config)
    return SubsetFit(H, coef, objective(data, H, coef, config.lam, config.standardize))


def c_step(data: Dataset, current: SubsetFit, config: SparseLtsConfig) -> SubsetFit:
    """
    One concentration step: keep the h observations with smallest squared
    residuals under the current coefficients and refit the lasso on them,
    warm-started at the current coefficients. A fit whose subset reproduces
    itself is returned unchanged. With standardized predictors the penalty
    depends on the subset, so a step need not descend; a step that would
    raise the objective is rejected and the current fit returned.
    """
    h = current.subset.size
    r = residuals(data, current.coefficients)
    H = h_smallest_indices(r * r, h)
    if np.array_equal(H, current.subset):
        return current
    coef, _ = _fit(data, H, config.lam, current.coefficients.slopes.copy(), config)
    new = SubsetFit(H, coef, objective(data, H, coef, config.lam, config.standardize))
    if config.standardize and new.objective > current.objective:
        return current
    return new


def fit_raw(data: Dataset, config: SparseLtsConfig, starts: Optional[np.ndarray] = None):
    """
    Raw sparse LTS fit.

    Every elemental start gets ``n_initial_csteps`` C-steps, the ``n_keep``
    starts with lowest objective are iterated until the subset no longer
    changes, and the best of those is returned (ties go to the earliest
    start). With h = n the only subset is the full sample and the plain lasso
    is returned.

    Returns (SubsetFit, diagnostics).
    """
    n = data.n
    h = config.h(n)
    if h == n:
        idx = np.arange(n)
        coef, conv = _fit(data, idx.astype(np.int64), config.lam, np.zeros(data.p), config)
        diag = {"n_unconverged_fits": int(not conv), "kept_starts": [], "kept_objectives": [],
                "csteps": [], "n_capped": 0, "n_distinct_final_subsets": 1, "n_converged_restarts": 1}
        return SubsetFit(idx, coef, objective(data, idx, coef, config.lam, config.standardize)), diag
    if starts is None:
        starts = elemental_subsets(n, config.n_starts, config.seed)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    keep, subs, b0s, betas, objs, steps, capped, n_bad, _ = _kernels.multistart(
        data.fortran_X, data.y, starts, h, float(config.lam), float(config.tolerance),
        int(config.max_iterations), int(config.n_initial_csteps), int(min(config.n_keep, len(starts))),
        int(config.max_csteps), bool(config.standardize))
    best = int(np.argmin(objs))  # first minimum, i.e. earliest start among ties
    H = subs[best].copy()
    coef = Coefficients(b0s[best], betas[best].copy())
    diag = {
        "n_unconverged_fits": int(n_bad),
        "kept_starts": keep.tolist(),
        "kept_objectives": objs.tolist(),
        "csteps": steps.tolist(),
        "n_capped": int(capped.sum()),
        "n_distinct_final_subsets": len({tuple(s) for s in subs.tolist()}),
        "n_converged_restarts": int((~capped).sum()),
    }
    return SubsetFit(H, coef, objective(data, H, coef, config.lam, config.standardize)), diag


def consistency_factor(alpha: float) -> float:
    """
    Factor making the alpha-trimmed root mean square consistent for the
    standard deviation at the normal model.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1], got %r" % (alpha,))
    if alpha == 1:
        return 1.0
    q = stats.norm.ppf((alpha + 1) / 2)
    return float(1.0 / math.sqrt((alpha - 2 * q * stats.norm.pdf(q)) / alpha))


def raw_scale(data: Dataset, best: SubsetFit, alpha: float):
    """
    Residual center (mean residual over the best subset) and scale (trimmed
    root mean square of the centered residuals of all n observations, times
    the consistency factor). Returns (center, scale).
    """
    r = residuals(data, best.coefficients)
    h = best.subset.size
    center = float(np.mean(r[best.subset]))
    rc2 = (r - center) ** 2
    scale = consistency_factor(alpha) * math.sqrt(trimmed_sum(rc2, h) / h)
    return center, float(scale)


def outlier_weights(resid, center: float, scale: float, delta: float = 0.0125) -> np.ndarray:
    """Binary weights: 1 when |(r - center) / scale| <= qnorm(1 - delta)."""
    resid = np.asarray(resid, dtype=float)
    if scale <= 0:
        raise ValueError("scale must be positive")
    cutoff = stats.norm.ppf(1 - delta)
    return (np.abs((resid - center) / scale) <= cutoff).astype(np.int64)


def fit_reweighted(data: Dataset, best: SubsetFit, config: SparseLtsConfig,
                   diagnostics: Optional[dict] = None) -> SparseLtsFit:
    """
    Reweighting step: flag outliers from the raw fit, refit the lasso on the
    remaining observations and compute the reweighted center and scale.
    """
    n = data.n
    flags = {}
    center, scale = raw_scale(data, best, config.alpha)
    r = residuals(data, best.coefficients)
    if scale > 0:
        w = outlier_weights(r, center, scale, config.delta)
    else:
        flags["exact_fit"] = True
        w = np.ones(n, dtype=np.int64)
    n_w = int(w.sum())
    if n_w < 3:
        flags["reweighting_skipped"] = True
        rw_coef, rw_center, rw_scale = best.coefficients, center, scale
    else:
        cfg = LassoConfig(config.lam, config.max_iterations, config.tolerance,
                          standardize=config.standardize)
        rw_coef, info = lasso_fit(data, np.flatnonzero(w), cfg, warm_start=best.coefficients,
                                  return_info=True)
        if not info.converged:
            flags["reweighted_unconverged"] = True
        rr = residuals(data, rw_coef)[w == 1]
        rw_center = float(rr.mean())
        rw_scale = consistency_factor(n_w / n) * math.sqrt(np.mean((rr - rw_center) ** 2))
    diagnostics = dict(diagnostics or {})
    return SparseLtsFit(
        raw_coefficients=best.coefficients,
        raw_center=center,
        raw_scale=float(scale),
        weights=w,
        reweighted_coefficients=rw_coef,
        reweighted_center=float(rw_center),
        reweighted_scale=float(rw_scale),
        lam=float(config.lam),
        h=int(best.subset.size),
        best_subset=best.subset,
        n_converged_restarts=int(diagnostics.get("n_converged_restarts", 0)),
        raw_objective=best.objective,
        flags=flags,
        diagnostics=diagnostics,
    )


def sparse_lts(data: Dataset, config: SparseLtsConfig, starts=None) -> SparseLtsFit:
    """Raw fit followed by the reweighting step."""
    best, diag = fit_raw(data, config, starts=starts)
    return fit_reweighted(data, best, config, diag)


def appendix_outlier(p: int, gamma: float, tau: float):
    """The contaminating point x = (tau, 0, ..., 0), y = gamma * tau."""
    x = np.zeros(p)
    x[0] = tau
    return x, gamma * tau


def breakdown_probe(data: Dataset, m: int, gamma: float, tau: float, config: SparseLtsConfig) -> float:
    """
    Replace the last ``m`` observations by the point ``appendix_outlier`` and
    return the Euclidean norm of the raw sparse LTS slopes.
    """
    if not 0 <= m <= data.n:
        raise ValueError("m must lie in [0, n]")
    X = data.X.copy()
    y = data.y.copy()
    if m:
        x_out, y_out = appendix_outlier(data.p, gamma, tau)
        X[data.n - m:] = x_out
        y[data.n - m:] = y_out
    best, _ = fit_raw(Dataset(X, y), config)
    return float(np.linalg.norm(best.coefficients.slopes))
