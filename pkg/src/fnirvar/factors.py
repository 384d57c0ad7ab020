"""Step one of the two-step estimator: principal-component factors.

Loadings are the top eigenvectors of the sample covariance of the (per-series
demeaned) panel; factor paths are the projections onto them. Factor dynamics
are fitted by least squares on the lagged design, with the factor count chosen
by a penalised residual-variance criterion and the lag order by AIC.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from fnirvar.panel import Panel
from fnirvar.util import fix_eigenvector_signs


def _as_matrix(panel) -> np.ndarray:
    if isinstance(panel, Panel):
        return panel.values
    return np.asarray(panel, dtype=float)


@dataclass
class FactorFit:
    """PCA loadings/factors and, once fitted, the factor VAR coefficients.

    loadings: (N, r) orthonormal columns, sign-fixed.
    factors: (r, T) projections of the demeaned panel.
    coeffs: (r*l, r) stacked lag coefficients for the oldest-first lagged
    design, or None before the VAR step. mean: per-series window mean removed
    before the projection.
    """

    loadings: np.ndarray
    factors: np.ndarray
    eigenvalues: np.ndarray
    mean: np.ndarray
    n_factors: int
    n_lags: int | None = None
    coeffs: np.ndarray | None = field(default=None)

    def lag_matrices(self) -> list:
        """Per-lag (r, r) coefficient matrices, lag 1 first."""
        if self.coeffs is None or self.n_lags is None:
            raise ValueError("factor VAR has not been fitted")
        r, l = self.n_factors, self.n_lags
        return [self.coeffs[(l - k) * r:(l - k + 1) * r, :].T for k in range(1, l + 1)]


def estimate_pca(panel, n_factors: int) -> FactorFit:
    """Top principal components of the demeaned panel's sample covariance."""
    x = _as_matrix(panel)
    n, t = x.shape
    if not 1 <= n_factors <= min(n, t):
        raise ValueError(f"factor count {n_factors} outside 1..{min(n, t)}")
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    cov = centered @ centered.T / t
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    loadings = fix_eigenvector_signs(vecs[:, :n_factors])
    factors = loadings.T @ centered
    return FactorFit(loadings, factors, vals[:n_factors], mean, n_factors)


def select_num_factors(panel, r_max: int) -> int:
    """Penalised residual-variance criterion, minimised over 1..r_max.

    criterion(r) = V(r) + r * V(r_max) * ((N+T)/(NT)) * ln(min(N, T)),
    with V(r) the mean squared residual after removing r components.
    """
    x = _as_matrix(panel)
    n, t = x.shape
    if not 1 <= r_max <= min(n, t):
        raise ValueError(f"r_max {r_max} outside 1..{min(n, t)}")
    centered = x - x.mean(axis=1, keepdims=True)
    vals = np.sort(np.linalg.eigvalsh(centered @ centered.T / t))[::-1]
    total = vals.sum()
    resid = total - np.cumsum(vals[:r_max])          # V(r) * N for r = 1..r_max
    v = resid / n
    penalty = v[-1] * ((n + t) / (n * t)) * np.log(min(n, t))
    criterion = v + penalty * np.arange(1, r_max + 1)
    return int(np.argmin(criterion)) + 1


def _lagged_design(factors: np.ndarray, n_lags: int, start: int | None = None):
    """Targets and oldest-first lagged regressors for a VAR(n_lags) fit.

    Row for target time t is (f_{t-l}', ..., f_{t-1}'). `start` fixes the
    first target index so different lag orders can share a sample.
    """
    r, t = factors.shape
    first = n_lags if start is None else start
    rows = t - first
    design = np.empty((rows, r * n_lags))
    for j, tt in enumerate(range(first, t)):
        design[j] = factors[:, tt - n_lags:tt].T.ravel()
    targets = factors[:, first:].T
    return design, targets


def fit_factor_var(factors: np.ndarray, n_lags: int) -> np.ndarray:
    """Least-squares VAR coefficients, stacked (r*l, r), oldest lag block first."""
    factors = np.asarray(factors, dtype=float)
    r, t = factors.shape
    if n_lags < 1:
        raise ValueError("lag order must be at least 1")
    if t <= r * n_lags + 1:
        raise ValueError(f"need more than {r * n_lags + 1} observations, got {t}")
    design, targets = _lagged_design(factors, n_lags)
    gram = design.T @ design
    try:
        factorization = cho_factor(gram)
    except np.linalg.LinAlgError:
        raise ValueError("singular lagged-design Gram matrix; try a smaller lag order") from None
    return cho_solve(factorization, design.T @ targets)


def select_var_order(factors: np.ndarray, l_max: int) -> int:
    """AIC over 1..l_max on a shared effective sample (targets from l_max on)."""
    factors = np.asarray(factors, dtype=float)
    r, t = factors.shape
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    t_eff = t - l_max
    if t_eff <= r * l_max + 1:
        raise ValueError("not enough observations for the requested maximum lag")
    scores = []
    for l in range(1, l_max + 1):
        design, targets = _lagged_design(factors, l, start=l_max)
        coeffs, *_ = np.linalg.lstsq(design, targets, rcond=None)
        resid = targets - design @ coeffs
        sigma = resid.T @ resid / t_eff
        sign, logdet = np.linalg.slogdet(sigma)
        if sign <= 0:
            logdet = -np.inf  # perfect fit; AIC -inf favours it
        scores.append(logdet + 2.0 * l * r * r / t_eff)
    return int(np.argmin(scores)) + 1


def forecast_factors(fit: FactorFit) -> np.ndarray:
    """One-step-ahead factor forecast from the trailing lag window."""
    if fit.coeffs is None or fit.n_lags is None:
        raise ValueError("factor VAR has not been fitted")
    r, t = fit.factors.shape
    l = fit.n_lags
    if t < l:
        raise ValueError(f"need at least {l} trailing factor observations, got {t}")
    window = fit.factors[:, t - l:t].T.ravel()
    return window @ fit.coeffs


def fit_factors(panel, n_factors: int, n_lags: int) -> FactorFit:
    """PCA followed by the factor VAR fit; returns the completed fit."""
    fit = estimate_pca(panel, n_factors)
    fit.coeffs = fit_factor_var(fit.factors, n_lags)
    fit.n_lags = n_lags
    return fit


def decompose(panel, fit: FactorFit) -> dict:
    """Split the panel into fitted common part and residual.

    common = mean + loadings @ factors; idio = panel - common, so the two
    pieces add back to the input exactly.
    """
    x = _as_matrix(panel)
    if x.shape[0] != fit.loadings.shape[0]:
        raise ValueError("panel and fit have different series counts")
    common = fit.mean[:, None] + fit.loadings @ fit.factors
    if common.shape != x.shape:
        raise ValueError("panel and fit have different lengths")
    return {"common": common, "idio": x - common}
