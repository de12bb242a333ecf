import warnings

import numpy as np
import pytest
from hypothesis import settings

warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def linear_data(rng, n=60, p=8, beta=None, sigma=0.5, intercept=1.0):
    from sparselts import Dataset
    X = rng.standard_normal((n, p))
    if beta is None:
        beta = np.zeros(p)
        beta[:3] = (2.0, -1.5, 1.0)
    y = intercept + X @ beta + sigma * rng.standard_normal(n)
    return Dataset(X, y), np.asarray(beta, float)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
