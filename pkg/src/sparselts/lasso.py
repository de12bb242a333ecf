"""
L1-penalized least squares on a subset of observations, plus the penalty
values at which every slope is shrunk to zero (classical and robust).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from . import _kernels
from .core import Coefficients, Dataset, as_index_set, column_scales

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class LassoConfig:
    """
    Parameters of a single lasso fit.

    The objective is ``sum_i w_i (y_i - b0 - x_i'b)^2 + W * lam * sum_j s_j |b_j|``
    over the fitted subset, with ``W`` the sum of the weights there (the
    subset size when unweighted). With ``standardize`` the predictors are
    standardized on the fitted subset, i.e. ``s_j`` is the (weighted,
    divisor ``W``) standard deviation of predictor j there; otherwise
    ``s_j = 1``. ``tolerance`` bounds the largest coefficient change in a
    sweep, measured in standard deviations of the response per standard
    deviation of the predictor.
    """
    lam: float
    max_iterations: int = DEFAULT_MAX_ITER
    tolerance: float = DEFAULT_TOL
    observation_weights: Optional[np.ndarray] = None
    standardize: bool = True

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lam must be a finite nonnegative number, got %r" % (self.lam,))
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.observation_weights is not None:
            w = np.asarray(self.observation_weights, dtype=float).reshape(-1)
            if np.any(~np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
                raise ValueError("observation weights must lie in [0, 1]")
            if not np.any(w > 0):
                raise ValueError("observation weights are all zero")
            object.__setattr__(self, "observation_weights", w)


@dataclass(frozen=True)
class LassoInfo:
    n_sweeps: int
    converged: bool


def lasso_fit(data: Dataset, subset=None, config: LassoConfig = None, *, lam=None,
              warm_start: Optional[Coefficients] = None, return_info: bool = False):
    """
    Lasso fit on the observations in ``subset`` (all rows when None).

    Either pass a LassoConfig or just ``lam``. Binary observation weights are
    handled by dropping the zero-weight rows, so a 0/1-weighted fit is
    identical to the unweighted fit on the retained rows. Failing to converge
    within ``max_iterations`` sweeps is not an error; the last iterate is
    returned and ``LassoInfo.converged`` is False.
    """
    if config is None:
        if lam is None:
            raise ValueError("give either config or lam")
        config = LassoConfig(lam)
    idx = np.arange(data.n) if subset is None else as_index_set(subset, data.n)
    w = config.observation_weights
    if w is not None:
        if w.shape[0] != data.n:
            raise ValueError("need one weight per observation (%d), got %d" % (data.n, w.shape[0]))
        if np.all((w == 0) | (w == 1)):
            idx = idx[w[idx] == 1]
            w = None
    if idx.size < 3:
        raise ValueError("a lasso fit needs at least 3 observations, got %d" % idx.size)
    if warm_start is not None and warm_start.p != data.p:
        raise ValueError("warm start has %d slopes, data has %d predictors" % (warm_start.p, data.p))
    weights = np.ones(data.n) if w is None else w
    if w is not None and np.sum(w[idx] > 0) < 3:
        raise ValueError("fewer than 3 observations with positive weight")
    init = np.zeros(data.p) if warm_start is None else warm_start.slopes
    b0, beta, sweeps, conv = _kernels.lasso_cd(
        data.fortran_X, data.y, weights, idx.astype(np.int64), float(config.lam),
        np.ascontiguousarray(init, dtype=float), float(config.tolerance), int(config.max_iterations),
        bool(config.standardize))
    coef = Coefficients(b0, beta)
    if return_info:
        return coef, LassoInfo(int(sweeps), bool(conv))
    return coef


def penalty_scales(X, weights=None) -> np.ndarray:
    """Weighted standard deviations (divisor sum of weights) of the columns of X."""
    X = np.asarray(X, dtype=float)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    W = w.sum()
    mu = w @ X / W
    return np.sqrt(w @ (X - mu) ** 2 / W)


def lasso_objective(data: Dataset, coef: Coefficients, lam: float, subset=None, weights=None,
                    standardize: bool = True) -> float:
    """
    Weighted residual sum of squares over ``subset`` plus
    ``W * lam * sum_j s_j |b_j|`` (see LassoConfig).
    """
    idx = np.arange(data.n) if subset is None else as_index_set(subset, data.n)
    w = np.ones(data.n) if weights is None else np.asarray(weights, dtype=float)
    r = data.y[idx] - coef.intercept - data.X[idx] @ coef.slopes
    s = penalty_scales(data.X[idx], w[idx]) if standardize else 1.0
    return float(np.sum(w[idx] * r ** 2) + np.sum(w[idx]) * lam * np.sum(s * np.abs(coef.slopes)))


def kkt_violation(data: Dataset, coef: Coefficients, lam: float, subset=None,
                  standardize: bool = True) -> float:
    """
    Largest violation of the lasso optimality conditions at ``coef``.

    With ``g_j = (2/m) x_j'r`` over the m fitted rows (centered predictors),
    active slopes need ``g_j = lam * s_j * sign(b_j)`` and inactive ones
    ``|g_j| <= lam * s_j`` (``s_j`` as in LassoConfig). Violations are divided by ``sd(x_j) * sd(y)`` to put
    them on the same standardized scale as the solver tolerance.
    """
    idx = np.arange(data.n) if subset is None else as_index_set(subset, data.n)
    X = data.X[idx]
    y = data.y[idx]
    m = idx.size
    means, scales, constant = column_scales(X)
    Xc = X - means
    r = y - coef.intercept - X @ coef.slopes
    g = 2.0 * (Xc.T @ r) / m
    sy = np.sqrt(np.mean((y - y.mean()) ** 2)) or 1.0
    sx = np.sqrt(np.einsum("ij,ij->j", Xc, Xc) / m)
    active = coef.slopes != 0
    t = lam * sx if standardize else lam
    viol = np.where(active, np.abs(g - t * np.sign(coef.slopes)),
                    np.maximum(np.abs(g) - t, 0.0))
    viol = np.where(constant, 0.0, viol / np.where(sx > 0, sx, 1.0) / sy)
    return float(np.max(viol)) if viol.size else 0.0


def lambda_max_pearson(data: Dataset, standardize: bool = True) -> float:
    """
    Smallest penalty at which the full-sample lasso sets every slope to zero.

    With standardized predictors (the default, see LassoConfig) this is
    ``2 max_j |Cor(y, x_j)| * sd(y)``, the standard deviation taken with
    divisor n. Otherwise it is
    ``(2/n) max_j |Cor(y, x_j)| * ||x_j - mean|| * ||y - mean||``, which is
    ``(2/n) max_j |Cor(y, x_j)|`` for variables scaled to unit length.
    Constant predictors are skipped.
    """
    n = data.n
    if n < 3:
        raise ValueError("need at least 3 observations")
    means, _, constant = column_scales(data.X)
    if np.all(constant):
        raise ValueError("all predictors are constant")
    yc = data.y - data.y.mean()
    if not np.any(yc):
        raise ValueError("response is constant")
    Xc = data.X - means
    ss = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    ny = np.sqrt(yc @ yc)
    cor = np.where(constant, 0.0, (Xc.T @ yc) / np.where(constant, 1.0, ss) / ny)
    if standardize:
        return float(2.0 * np.max(np.abs(cor)) * ny / np.sqrt(n))
    return float(2.0 / n * np.max(np.abs(cor) * ss * ny))


def _robust_standardize(x, c):
    med = np.median(x)
    mad = stats.median_abs_deviation(x, scale="normal")
    flagged = False
    if mad <= 0:
        mad = np.std(x, ddof=1)
        flagged = True
        if mad <= 0:
            raise ValueError("vector is constant")
    return (x - med) / mad, mad, flagged


def winsorized_correlation(x, y, c: float = 2.0, d: Optional[float] = None, return_flag: bool = False):
    """
    Robust correlation by bivariate winsorization.

    Both variables are standardized with median and MAD. An initial
    correlation is the Pearson correlation of the data clipped at ``+-c``.
    Points whose Mahalanobis distance under that initial correlation exceeds
    ``sqrt(d)`` are then pulled radially onto the tolerance ellipse and the
    Pearson correlation of the result is returned. ``d`` defaults to the 95%
    quantile of the chi-square distribution with 2 degrees of freedom.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    if d is None:
        d = stats.chi2.ppf(0.95, 2)
    ux, _, fx = _robust_standardize(x, c)
    uy, _, fy = _robust_standardize(y, c)
    r0 = _pearson(np.clip(ux, -c, c), np.clip(uy, -c, c))
    if 1.0 - abs(r0) < 1e-12:
        r = float(np.sign(r0))
    else:
        d2 = (ux ** 2 - 2 * r0 * ux * uy + uy ** 2) / (1 - r0 ** 2)
        shrink = np.minimum(1.0, np.sqrt(d / np.maximum(d2, 1e-300)))
        r = _pearson(ux * shrink, uy * shrink)
    r = float(np.clip(r, -1.0, 1.0))
    if return_flag:
        return r, bool(fx or fy)
    return r


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    if den == 0:
        return 0.0
    return float((a @ b) / den)


def lambda_max_robust(data: Dataset, c: float = 2.0, standardize: bool = True) -> float:
    """
    Robust counterpart of ``lambda_max_pearson``: the correlations are
    winsorized correlations and the standard deviations are MADs, so
    ``2 * max_j |r_j| * mad(y)`` with standardized predictors and
    ``(2/n) * (n-1) * max_j |r_j| * mad(x_j) * mad(y)`` otherwise.
    """
    n = data.n
    if n < 3:
        raise ValueError("need at least 3 observations")
    y = data.y
    if np.ptp(y) == 0:
        raise ValueError("response is constant")
    _, sy, _ = _robust_standardize(y, c)
    best = -1.0
    for j in range(data.p):
        x = data.X[:, j]
        if np.ptp(x) == 0:
            continue
        r = winsorized_correlation(x, y, c)
        if standardize:
            best = max(best, abs(r))
        else:
            _, sx, _ = _robust_standardize(x, c)
            best = max(best, abs(r) * sx)
    if best < 0:
        raise ValueError("all predictors are constant")
    if standardize:
        return float(2.0 * best * sy)
    return float(2.0 / n * (n - 1) * best * sy)
