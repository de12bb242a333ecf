"""
Sparse LTS versus the plain lasso on data with planted vertical outliers.

    python demos/planted_outliers.py
"""
import numpy as np

from sparselts import Dataset, SparseLtsConfig, select

rng = np.random.default_rng(1)
n, p = 100, 20
X = rng.standard_normal((n, p))
beta = np.zeros(p)
beta[:4] = (2.0, -1.5, 1.0, 0.5)
y = 1.0 + X @ beta + 0.5 * rng.standard_normal(n)
bad = np.arange(n - 10, n)
y[bad] += 15.0
data = Dataset(X, y)

robust = select(data, "bic", SparseLtsConfig(alpha=0.75, seed=0))
lasso = select(data, "bic", SparseLtsConfig(alpha=1.0, seed=0))

fit = robust.best_fit
print("sparse LTS: lambda %.4f, support %s" % (robust.best_lambda, np.flatnonzero(fit.reweighted_coefficients.slopes)))
print("  flagged rows %s (planted %s)" % (fit.outliers.tolist(), bad.tolist()))
print("  slopes 0-3: %s" % np.round(fit.reweighted_coefficients.slopes[:4], 3))
las = lasso.best_fit.raw_coefficients
print("lasso:      lambda %.4f, support %s" % (lasso.best_lambda, np.flatnonzero(las.slopes)))
print("  slopes 0-3: %s" % np.round(las.slopes[:4], 3))
