"""
Empirical breakdown probe: replace the last m rows by the point
x = (tau, 0, ..., 0), y = gamma * tau and watch the norm of the raw slopes.
With n = 40 and h = 30 the estimator withstands m = 10 but not m = 11.

    python demos/breakdown.py
"""
import numpy as np

from sparselts import Dataset, SparseLtsConfig, breakdown_probe

rng = np.random.default_rng(0)
X = rng.standard_normal((40, 5))
data = Dataset(X, X @ np.array([1.0, 0.5, 0.0, 0.0, -1.0]) + 0.5 * rng.standard_normal(40))
config = SparseLtsConfig(alpha=0.75, lam=0.05)
print("clean: %.3f" % breakdown_probe(data, 0, 1.0, 1.0, config))
for m in (10, 11):
    for gamma in (10.0, 100.0, 1000.0):
        print("m=%d gamma=%-6g norm %.3f" % (m, gamma, breakdown_probe(data, m, gamma, 1e4, config)))
