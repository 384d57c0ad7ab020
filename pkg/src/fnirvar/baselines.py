"""Comparator predictors: factors alone, and factors plus an L1-sparse VAR."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import lasso_path

from fnirvar.factors import FactorFit, forecast_factors

N_GRID = 50
GRID_FLOOR = 1e-4


@dataclass
class LassoVarFit:
    """Sparse lag-one coefficients with the per-equation penalty that won."""

    coeffs: np.ndarray
    penalties: np.ndarray
    nnz: int


def _bic_scores(targets, design, coef_paths, t_eff):
    rss = ((targets[:, None] - design @ coef_paths) ** 2).sum(axis=0)
    rss = np.maximum(rss, 1e-300)
    k = (coef_paths != 0).sum(axis=0)
    return t_eff * np.log(rss / t_eff) + k * np.log(t_eff)


def lasso_var(residuals, lambda_grid=None) -> LassoVarFit:
    """Per-equation L1-penalised regression of each series on all lagged series.

    Regressors are scaled to unit standard deviation inside the window and the
    coefficients mapped back. The penalty follows a 50-point log-spaced path
    from the data-driven maximum down to 1e-4 of it (coordinate descent with
    warm starts along the path), and each equation keeps the penalty with the
    lowest BIC: T*ln(RSS/T) + nnz*ln(T). An explicit grid may be supplied; a
    grid value of exactly zero means plain least squares.
    """
    x = np.asarray(residuals, dtype=float)
    n, t = x.shape
    if t < 3:
        raise ValueError("need at least three time steps")
    if lambda_grid is not None:
        lambda_grid = np.asarray(sorted(lambda_grid, reverse=True), dtype=float)
        if lambda_grid.size == 0:
            raise ValueError("penalty grid is empty")
        if (lambda_grid < 0).any():
            raise ValueError("penalties must be non-negative")
    design = x[:, :-1].T
    targets = x[:, 1:]
    t_eff = t - 1
    scales = design.std(axis=0)
    scales[scales == 0] = 1.0
    scaled = design / scales

    coeffs = np.zeros((n, n))
    penalties = np.zeros(n)
    for i in range(n):
        y = targets[i]
        if lambda_grid is not None and lambda_grid.size == 1 and lambda_grid[0] == 0.0:
            beta, *_ = np.linalg.lstsq(scaled, y, rcond=None)
            coeffs[i] = beta / scales
            continue
        grid = None if lambda_grid is None else lambda_grid[lambda_grid > 0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alphas, paths, _ = lasso_path(
                scaled, y, alphas=grid, n_alphas=N_GRID, eps=GRID_FLOOR
            )
        scores = _bic_scores(y, scaled, paths, t_eff)
        if lambda_grid is not None and (lambda_grid == 0.0).any():
            beta_ols, *_ = np.linalg.lstsq(scaled, y, rcond=None)
            rss = ((y - scaled @ beta_ols) ** 2).sum()
            bic_ols = t_eff * np.log(max(rss, 1e-300) / t_eff) + n * np.log(t_eff)
            if bic_ols < scores.min():
                coeffs[i] = beta_ols / scales
                penalties[i] = 0.0
                continue
        best = int(np.argmin(scores))
        coeffs[i] = paths[:, best] / scales
        penalties[i] = alphas[best]
    return LassoVarFit(coeffs, penalties, int((coeffs != 0).sum()))


def predict_factors_only(fit: FactorFit) -> np.ndarray:
    """One-step-ahead panel forecast from the factor model alone."""
    return fit.loadings @ forecast_factors(fit)
