"""Sparse least trimmed squares regression."""
from .core import (Coefficients, Dataset, h_smallest_indices, predictor_scales, residuals, subset_standardize,
                   trimmed_sum)
from .lasso import LassoConfig, lasso_fit, lambda_max_pearson, lambda_max_robust, winsorized_correlation
from .lts import (SparseLtsConfig, SparseLtsFit, SubsetFit, breakdown_probe, c_step,
                  consistency_factor, elemental_start, fit_raw, fit_reweighted, objective,
                  outlier_weights, raw_scale, sparse_lts)
from .selection import SelectionResult, bic_score, cv_rtmspe, lambda_grid, select

__version__ = "0.1.0"
