"""
Data containers and the small numerical primitives shared by the estimators:
residuals, trimmed sums of order statistics, h-subset selection and
subset-wise standardization.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Dataset:
    """
    A regression sample.

    Parameters
    ----------
    X : (n, p) array of predictors.
    y : (n,) array, the response.
    """
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float)).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValueError("need n >= 1 and p >= 1, got X of shape %s" % (X.shape,))
        if y.shape[0] != n:
            raise ValueError("X has %d rows but y has length %d" % (n, y.shape[0]))
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def fortran_X(self) -> np.ndarray:
        """Column-major copy of X used by the compiled kernels."""
        return np.asfortranarray(self.X)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows])


@dataclass(frozen=True)
class Coefficients:
    """Intercept plus slope vector. Inactive slopes are stored as exact zeros."""
    intercept: float
    slopes: np.ndarray

    def __post_init__(self):
        slopes = np.asarray(self.slopes, dtype=float).reshape(-1)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def p(self) -> int:
        return self.slopes.shape[0]

    @property
    def df(self) -> int:
        """Number of nonzero slopes."""
        return int(np.count_nonzero(self.slopes))

    @property
    def sparsity(self) -> int:
        """Number of exactly-zero slopes."""
        return self.p - self.df

    @classmethod
    def zeros(cls, p: int, intercept: float = 0.0) -> "Coefficients":
        return cls(intercept, np.zeros(p))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[1] != self.p:
            raise ValueError("coefficients have %d slopes but X has %d columns" % (self.p, X.shape[1]))
        return self.intercept + X @ self.slopes


@dataclass(frozen=True)
class StandardizationStats:
    """
    Location and scale of each variable over a subset.

    ``centers`` holds the p predictor means followed by the response mean,
    ``scales`` the predictor standard deviations (divisor m - 1). Columns that
    are constant on the subset are marked in ``constant`` and get scale 1 so
    the standardized column is identically zero.
    """
    centers: np.ndarray
    scales: np.ndarray
    constant: np.ndarray

    def to_original(self, intercept_std: float, slopes_std) -> Coefficients:
        """Map coefficients fitted on standardized data back to original units."""
        slopes_std = np.asarray(slopes_std, dtype=float)
        slopes = np.where(self.constant, 0.0, slopes_std / self.scales)
        intercept = intercept_std + self.centers[-1] - self.centers[:-1] @ slopes
        return Coefficients(intercept, slopes)

    def to_standardized(self, coef: Coefficients):
        slopes_std = coef.slopes * self.scales
        intercept_std = coef.intercept - self.centers[-1] + self.centers[:-1] @ coef.slopes
        return intercept_std, slopes_std


def as_index_set(indices, n: int) -> np.ndarray:
    """Validate and normalize an index set: sorted, distinct, within [0, n)."""
    idx = np.unique(np.asarray(indices, dtype=np.int64).reshape(-1))
    if idx.size != np.asarray(indices).size:
        raise ValueError("index set contains duplicates")
    if idx.size < 1 or idx.size > n:
        raise ValueError("index set size %d outside [1, %d]" % (idx.size, n))
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError("index out of range [0, %d)" % n)
    return idx


def residuals(data: Dataset, coef: Coefficients) -> np.ndarray:
    """r_i = y_i - b0 - x_i'b for all observations."""
    if coef.p != data.p:
        raise ValueError("coefficients have %d slopes, data has %d predictors" % (coef.p, data.p))
    return data.y - coef.intercept - data.X @ coef.slopes


def _check_h(n: int, h: int) -> None:
    if not 1 <= h <= n:
        raise ValueError("h must satisfy 1 <= h <= %d, got %d" % (n, h))


def h_smallest_indices(values, h: int) -> np.ndarray:
    """
    Indices of the h smallest entries, returned sorted.

    Ties at the h-th order statistic go to the lowest index (stable sort).
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    _check_h(values.size, h)
    order = np.argsort(values, kind="stable")
    return np.sort(order[:h])


def trimmed_sum(values, h: int) -> float:
    """Sum of the h smallest entries of ``values``."""
    values = np.asarray(values, dtype=float).reshape(-1)
    _check_h(values.size, h)
    if h == values.size:
        return float(np.sum(values))
    return float(np.sum(np.partition(values, h - 1)[:h]))


def column_scales(X: np.ndarray):
    """
    Means and sample standard deviations of the columns of X.

    Returns (means, scales, constant) where constant columns get scale 1.
    A column counts as constant when its spread is at rounding level relative
    to its magnitude.
    """
    m = X.shape[0]
    means = X.mean(axis=0)
    Xc = X - means
    ss = np.einsum("ij,ij->j", Xc, Xc)
    mag = np.max(np.abs(X), axis=0) if m else np.zeros(X.shape[1])
    constant = ss <= m * (1e-12 * mag) ** 2
    scales = np.sqrt(ss / max(m - 1, 1))
    scales = np.where(constant, 1.0, scales)
    return means, scales, constant


def predictor_scales(X: np.ndarray, robust: bool = True) -> np.ndarray:
    """
    One positive scale per predictor column, used to put the predictors on a
    common footing before penalizing.

    ``robust`` uses the MAD (normal-consistent), falling back to the sample
    standard deviation where the MAD is zero; otherwise the sample standard
    deviation. Constant columns get scale 1.
    """
    X = np.asarray(X, dtype=float)
    _, sd, constant = column_scales(X)
    if not robust:
        return sd
    mad = stats.median_abs_deviation(X, axis=0, scale="normal")
    return np.where(constant, 1.0, np.where(mad > 0, mad, sd))


def subset_standardize(data: Dataset, subset):
    """
    Restrict data to ``subset``, center all variables and scale the predictors.

    The response is centered but not rescaled. Returns the standardized
    Dataset (rows in subset order) and the StandardizationStats needed to map
    coefficients back to original units.
    """
    idx = as_index_set(subset, data.n)
    if idx.size < 2:
        raise ValueError("standardization needs at least 2 observations")
    Xs = data.X[idx]
    ys = data.y[idx]
    means, scales, constant = column_scales(Xs)
    ymean = ys.mean()
    Z = (Xs - means) / scales
    Z[:, constant] = 0.0
    stats = StandardizationStats(np.append(means, ymean), scales, constant)
    return Dataset(Z, ys - ymean), stats
