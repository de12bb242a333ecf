import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sparselts import Coefficients, Dataset, h_smallest_indices, residuals, subset_standardize, trimmed_sum
from sparselts.core import predictor_scales

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_dataset_rejects_nonfinite_and_mismatch():
    with pytest.raises(ValueError):
        Dataset(np.array([[1.0], [np.nan]]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        Dataset(np.ones((3, 2)), np.ones(4))


def test_residuals_zero_coefficients_give_y(rng):
    data = Dataset(rng.standard_normal((5, 2)), rng.standard_normal(5))
    np.testing.assert_array_equal(residuals(data, Coefficients.zeros(2)), data.y)


def test_residuals_exact_fit(rng):
    X = rng.standard_normal((6, 3))
    coef = Coefficients(0.5, np.array([1.0, -2.0, 0.25]))
    data = Dataset(X, coef.predict(X))
    np.testing.assert_allclose(residuals(data, coef), 0, atol=1e-12)


def test_residuals_hand_arithmetic():
    data = Dataset(np.array([[1.0], [2.0]]), np.array([3.0, 1.0]))
    np.testing.assert_array_equal(residuals(data, Coefficients(1.0, np.array([1.0]))), [1.0, -2.0])


def test_residuals_dimension_mismatch(rng):
    data = Dataset(rng.standard_normal((4, 2)), rng.standard_normal(4))
    with pytest.raises(ValueError):
        residuals(data, Coefficients.zeros(3))


def test_trimmed_sum_examples():
    assert trimmed_sum([4, 1, 9, 0], 2) == 1
    assert trimmed_sum([4, 1, 9, 0], 4) == 14
    with pytest.raises(ValueError):
        trimmed_sum([1, 2], 3)
    with pytest.raises(ValueError):
        trimmed_sum([1, 2], 0)


def test_trimmed_sum_ties_order_independent(rng):
    v = np.array([3.0, 1.0, 2.0, 2.0, 2.0, 5.0])
    for _ in range(20):
        assert trimmed_sum(rng.permutation(v), 3) == np.sort(v)[:3].sum()


def test_h_smallest_examples():
    np.testing.assert_array_equal(h_smallest_indices([5, 2, 2, 7], 2), [1, 2])
    np.testing.assert_array_equal(h_smallest_indices([1, 1, 1, 1, 1], 3), [0, 1, 2])
    np.testing.assert_array_equal(h_smallest_indices([3, 1, 2], 3), [0, 1, 2])


def test_subset_standardize_examples():
    data = Dataset(np.array([[1.0], [2.0], [3.0]]), np.array([1.0, 2.0, 4.0]))
    z, st_ = subset_standardize(data, [0, 1, 2])
    assert st_.centers[0] == 2.0 and st_.scales[0] == 1.0
    np.testing.assert_allclose(z.y.mean(), 0, atol=1e-15)


def test_subset_standardize_already_standard(rng):
    X = rng.standard_normal((20, 3))
    X = (X - X.mean(0)) / X.std(0, ddof=1)
    _, st_ = subset_standardize(Dataset(X, rng.standard_normal(20)), np.arange(20))
    np.testing.assert_allclose(st_.centers[:-1], 0, atol=1e-14)
    np.testing.assert_allclose(st_.scales, 1, atol=1e-14)


def test_subset_standardize_flags_constant_column(rng):
    X = rng.standard_normal((10, 3))
    X[:, 1] = 4.0
    z, st_ = subset_standardize(Dataset(X, rng.standard_normal(10)), np.arange(10))
    assert st_.constant.tolist() == [False, True, False]
    assert np.all(z.X[:, 1] == 0)
    assert st_.to_original(0.0, [1.0, 5.0, 1.0]).slopes[1] == 0


def test_back_transform_preserves_predictions(rng):
    X = 3 + 5 * rng.standard_normal((15, 4))
    data = Dataset(X, rng.standard_normal(15))
    sub = np.arange(2, 13)
    z, st_ = subset_standardize(data, sub)
    b_std = rng.standard_normal(4)
    coef = st_.to_original(0.3, b_std)
    pred_std = 0.3 + z.X @ b_std + st_.centers[-1]
    np.testing.assert_allclose(coef.predict(X[sub]), pred_std, rtol=1e-10)
    b0, b1 = st_.to_standardized(coef)
    np.testing.assert_allclose(b1, b_std, rtol=1e-12)
    np.testing.assert_allclose(b0, 0.3, atol=1e-10)


def test_predictor_scales(rng):
    X = rng.standard_normal((200, 3)) * [1.0, 10.0, 0.1]
    X[:, 2] = 0.0
    X[:100, 1] = 0.0
    s = predictor_scales(X, robust=True)
    assert s[2] == 1.0 and s[1] > 0
    np.testing.assert_allclose(predictor_scales(X, robust=False)[:2], X[:, :2].std(0, ddof=1))


@given(arrays(float, st.integers(1, 30), elements=finite), st.data())
def test_trimmed_sum_matches_sort(values, data):
    h = data.draw(st.integers(1, values.size))
    np.testing.assert_allclose(trimmed_sum(values, h), np.sort(values)[:h].sum(), rtol=1e-12, atol=1e-6)


@given(arrays(float, st.integers(1, 30), elements=st.integers(-5, 5).map(float)), st.data())
def test_h_smallest_consistent_with_trimmed_sum(values, data):
    h = data.draw(st.integers(1, values.size))
    idx = h_smallest_indices(values, h)
    assert idx.size == h and np.unique(idx).size == h
    assert values[idx].sum() == trimmed_sum(values, h)
    excluded = np.setdiff1d(np.arange(values.size), idx)
    if excluded.size:
        assert values[excluded].min() >= values[idx].max()
        # ties go to the lowest index
        tied = excluded[values[excluded] == values[idx].max()]
        assert np.all(tied > idx[values[idx] == values[idx].max()].max())


@given(st.floats(-100, 100), st.integers(0, 2 ** 32 - 1))
def test_residuals_shift_equivariance(c, seed):
    r = np.random.default_rng(seed)
    data = Dataset(r.standard_normal((6, 2)), r.standard_normal(6))
    coef = Coefficients(r.standard_normal(), r.standard_normal(2))
    shifted = Dataset(data.X, data.y + c)
    np.testing.assert_allclose(residuals(shifted, Coefficients(coef.intercept + c, coef.slopes)),
                               residuals(data, coef), atol=1e-10)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 12))
def test_standardize_roundtrip_property(seed, m):
    r = np.random.default_rng(seed)
    X = r.normal(r.uniform(-10, 10, 3), r.uniform(0.1, 10, 3), size=(m + 3, 3))
    data = Dataset(X, r.standard_normal(m + 3))
    sub = np.sort(r.choice(m + 3, m, replace=False))
    z, st_ = subset_standardize(data, sub)
    kept = ~st_.constant
    np.testing.assert_allclose(z.X[:, kept].mean(0), 0, atol=1e-10)
    np.testing.assert_allclose(z.X[:, kept].std(0, ddof=1), 1, rtol=1e-10)
    b = r.standard_normal(3)
    pred = st_.to_original(0.0, b).predict(X[sub])
    ref = z.X @ b + st_.centers[-1]
    np.testing.assert_allclose(pred, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())
