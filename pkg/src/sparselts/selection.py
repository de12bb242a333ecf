"""
Choosing the penalty: an equispaced grid below the zero-model penalty,
scored by BIC or by cross-validated root trimmed mean squared prediction
error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .core import Dataset, predictor_scales, trimmed_sum
from .lasso import lambda_max_pearson, lambda_max_robust
from .lts import SparseLtsConfig, SparseLtsFit, sparse_lts

GRID_STEP = 0.025


@dataclass
class SelectionResult:
    grid: np.ndarray
    scores: np.ndarray
    best_lambda: float
    best_fit: Optional[SparseLtsFit]
    criterion: str
    reweighted: bool = True
    fits: List[Optional[SparseLtsFit]] = field(default_factory=list, repr=False)
    failed: List[int] = field(default_factory=list)
    predictor_scales: Optional[np.ndarray] = None

    @property
    def best_index(self) -> int:
        return int(np.flatnonzero(self.grid == self.best_lambda)[0])


def lambda_grid(lambda0: float, p: int, n: int, step: float = GRID_STEP) -> np.ndarray:
    """
    Descending grid lambda0, lambda0 (1 - step), ..., 0. Zero is left out
    when p > n.
    """
    if not lambda0 > 0 or not np.isfinite(lambda0):
        raise ValueError("lambda0 must be positive, got %r" % (lambda0,))
    k = int(round(1 / step))
    grid = lambda0 * (np.arange(k, -1, -1) / k)
    if p > n:
        grid = grid[:-1]
    return grid


def bic_score(fit: SparseLtsFit, n: int, use_reweighted: bool = True) -> float:
    """log(scale) + df * log(n) / n, with df the number of nonzero slopes."""
    scale = fit.scale(use_reweighted)
    df = fit.coefficients(use_reweighted).df
    if scale <= 0:
        fit.flags["exact_fit"] = True
        return -math.inf
    return math.log(scale) + df * math.log(n) / n


def rtmspe(errors, h: int) -> float:
    """Root of the mean of the h smallest squared prediction errors."""
    e2 = np.asarray(errors, dtype=float) ** 2
    return math.sqrt(trimmed_sum(e2, h) / h)


def cv_folds(n: int, k: int, rng) -> List[np.ndarray]:
    """Random split of range(n) into k blocks of (almost) equal size."""
    if not 2 <= k <= n:
        raise ValueError("number of folds must lie in [2, n]")
    return np.array_split(rng.permutation(n), k)


def cv_rtmspe(data: Dataset, lam: float, k: int = 5, config: SparseLtsConfig = SparseLtsConfig(),
              n_repetitions: int = 5, seed: int = 0, reweighted: bool = True) -> float:
    """
    K-fold cross-validated RTMSPE of sparse LTS at ``lam``, trimmed with the
    same h as the fit on the full sample, averaged over random splits.
    """
    n = data.n
    h = config.h(n)
    cfg = config.with_lambda(lam)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(n_repetitions):
        errors = np.empty(n)
        for test in cv_folds(n, k, rng):
            train = np.setdiff1d(np.arange(n), test)
            if min(int(math.floor((train.size + 1) * config.alpha)), train.size) < 3:
                raise ValueError("a training fold of %d rows is too small" % train.size)
            fit = sparse_lts(data.take(train), cfg)
            coef = fit.coefficients(reweighted)
            errors[test] = data.y[test] - coef.predict(data.X[test])
        values.append(rtmspe(errors, h))
    return float(np.mean(values))


def lambda0(data: Dataset, robust: bool = True, standardize: bool = True) -> float:
    if robust:
        return lambda_max_robust(data, standardize=standardize)
    return lambda_max_pearson(data, standardize=standardize)


def fit_grid(data: Dataset, grid, config: SparseLtsConfig):
    """Fit sparse LTS at every grid value. Failed points come back as None."""
    fits = []
    failed = []
    for i, lam in enumerate(grid):
        try:
            fits.append(sparse_lts(data, config.with_lambda(lam)))
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            fits.append(None)
            failed.append(i)
    return fits, failed


def choose(grid, scores, fits, criterion, reweighted, failed=()) -> SelectionResult:
    grid = np.asarray(grid, dtype=float)
    scores = np.asarray(scores, dtype=float)
    i = int(np.argmin(scores))  # grid is descending: ties go to the larger penalty
    return SelectionResult(grid, scores, float(grid[i]), fits[i] if fits else None,
                           criterion, reweighted, list(fits), list(failed))


def bic_from_fits(grid, fits, n, reweighted=True, failed=()) -> SelectionResult:
    scores = [math.inf if f is None else bic_score(f, n, reweighted) for f in fits]
    return choose(grid, scores, fits, "BIC", reweighted, failed)


def select(data: Dataset, criterion: str = "bic", config: SparseLtsConfig = SparseLtsConfig(),
           grid=None, robust: Optional[bool] = None, reweighted: bool = True,
           folds: int = 5, repetitions: int = 5, standardize: bool = True) -> SelectionResult:
    """
    Pick the penalty on a grid by BIC or cross-validated RTMSPE.

    The default grid runs from the robust zero-model penalty (the classical
    one when alpha = 1, i.e. for the plain lasso) down to 0 in steps of
    2.5% of it.

    With ``standardize`` the predictors are first divided by a fixed scale
    per column (MAD when ``robust``, standard deviation otherwise), so the
    penalty treats all predictors alike; the returned coefficients are in
    original units. The grid, if given, refers to the scaled problem.
    """
    criterion = criterion.lower()
    if criterion not in ("bic", "cv"):
        raise ValueError("criterion must be 'bic' or 'cv'")
    if robust is None:
        robust = config.h(data.n) < data.n
    scales = None
    if standardize:
        scales = predictor_scales(data.X, robust)
        data = Dataset(data.X / scales, data.y)
    if grid is None:
        grid = lambda_grid(lambda0(data, robust, config.standardize), data.p, data.n)
    grid = np.sort(np.asarray(grid, dtype=float))[::-1]
    if criterion == "bic":
        fits, failed = fit_grid(data, grid, config)
        res = bic_from_fits(grid, fits, data.n, reweighted, failed)
    else:
        scores = []
        failed = []
        for i, lam in enumerate(grid):
            try:
                scores.append(cv_rtmspe(data, lam, folds, config, repetitions, seed=config.seed,
                                        reweighted=reweighted))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError):
                scores.append(math.inf)
                failed.append(i)
        res = choose(grid, scores, [], "CV", reweighted, failed)
        res.best_fit = sparse_lts(data, config.with_lambda(res.best_lambda))
    if scales is not None:
        res.fits = [None if f is None else f.unscaled(scales) for f in res.fits]
        res.best_fit = res.fits[res.best_index] if res.fits else res.best_fit.unscaled(scales)
        res.predictor_scales = scales
    return res
