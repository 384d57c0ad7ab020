"""Step two of the estimator: network-restricted VAR on the residual panel.

The residual sample covariance is spectrally embedded; rows of the embedding
are clustered by a Gaussian mixture; series sharing a cluster are allowed
nonzero lag-one coefficients and everything else is restricted to zero, after
which each equation is fitted by ordinary least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.mixture import GaussianMixture

from fnirvar.util import fix_eigenvector_signs

GMM_MAX_RESEEDS = 5
RIDGE_SCALE = 1e-8


@dataclass
class NirvarFit:
    """Embedding, clusters, restriction pattern and fitted coefficients.

    coeffs[i, j] is zero unless i and j share a cluster. ridge_rows lists the
    equations where a singular Gram matrix forced a small ridge.
    """

    embedding_dim: int
    n_clusters: int
    labels: np.ndarray
    restriction: np.ndarray
    coeffs: np.ndarray
    embedding: np.ndarray
    ridge_rows: list = field(default_factory=list)


def noise_edge_count(residuals) -> int:
    """Correlation-matrix eigenvalues above the pure-noise upper edge.

    The edge is (1 + sqrt(N/T))^2, the upper support bound of the limiting
    eigenvalue distribution of a white-noise correlation matrix. Zero means
    the residual spectrum is indistinguishable from noise.
    """
    x = np.asarray(residuals, dtype=float)
    n, t = x.shape
    if t <= 1:
        raise ValueError("need at least two time steps")
    stds = x.std(axis=1)
    dead = np.nonzero(stds == 0)[0]
    if dead.size:
        raise ValueError(f"series {dead[0]} has zero variance over the window")
    corr = np.corrcoef(x)
    edge = (1.0 + np.sqrt(n / t)) ** 2
    return int((np.linalg.eigvalsh(corr) > edge).sum())


def embedding_dimension(residuals) -> int:
    """noise_edge_count floored at one, so the embedding is always defined."""
    return max(noise_edge_count(residuals), 1)


def spectral_embed(gamma, dim: int) -> np.ndarray:
    """Unit eigenvectors of the d largest-|eigenvalue| directions, sign-fixed."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0]
    if gamma.shape != (n, n) or not np.allclose(gamma, gamma.T, atol=1e-8):
        raise ValueError("expected a symmetric matrix")
    if not 1 <= dim <= n:
        raise ValueError(f"embedding dimension {dim} outside 1..{n}")
    vals, vecs = np.linalg.eigh(gamma)
    order = np.argsort(-np.abs(vals), kind="stable")
    return fix_eigenvector_signs(vecs[:, order[:dim]])


def cluster_gmm(embedding, n_clusters: int, seed, n_init: int = 10) -> np.ndarray:
    """Gaussian-mixture labels for the embedding rows, best of n_init restarts.

    Full covariances, k-means++ starts, small covariance ridge. If some
    mixture component ends up owning no points, the fit is retried with a
    derived seed a few times before giving up.
    """
    points = np.asarray(embedding, dtype=float)
    if n_clusters > points.shape[0]:
        raise ValueError("more clusters than points")
    base = int(np.random.default_rng(seed).integers(2**31 - 1))
    for attempt in range(GMM_MAX_RESEEDS):
        model = GaussianMixture(
            n_components=n_clusters,
            covariance_type="full",
            init_params="k-means++",
            n_init=n_init,
            tol=1e-6,
            max_iter=500,
            reg_covar=1e-6,
            random_state=(base + attempt) % (2**31 - 1),
        )
        labels = model.fit_predict(points)
        if np.unique(labels).size == n_clusters:
            return labels
    raise RuntimeError(
        f"mixture fit left an empty cluster after {GMM_MAX_RESEEDS} reseeded restarts"
    )


def build_restriction(labels) -> np.ndarray:
    """Binary matrix with a one wherever two series share a cluster."""
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(float)


def restricted_var_ols(residuals, restriction):
    """Per-equation OLS of each series on the lagged series in its cluster.

    Returns (coeffs, ridge_rows): excluded entries are exactly zero; rows where
    the Gram matrix was singular get a ridge of RIDGE_SCALE * trace and are
    reported in ridge_rows.
    """
    x = np.asarray(residuals, dtype=float)
    restriction = np.asarray(restriction)
    n, t = x.shape
    coeffs = np.zeros((n, n))
    ridge_rows = []
    lagged = x[:, :-1]
    targets = x[:, 1:]
    for i in range(n):
        active = np.nonzero(restriction[i] != 0)[0]
        if active.size >= t - 1:
            raise ValueError(
                f"row {i}: {active.size} active regressors for {t - 1} usable steps"
            )
        design = lagged[active].T
        gram = design.T @ design
        rhs = design.T @ targets[i]
        try:
            factorization = cho_factor(gram)
            pivots = np.abs(np.diag(factorization[0]))
            # Cholesky can "succeed" on a singular PSD matrix; check pivots
            if pivots.min() <= 1e-7 * pivots.max():
                raise np.linalg.LinAlgError("numerically singular Gram matrix")
            beta = cho_solve(factorization, rhs)
        except np.linalg.LinAlgError:
            ridge = RIDGE_SCALE * np.trace(gram)
            beta = np.linalg.solve(gram + ridge * np.eye(active.size), rhs)
            ridge_rows.append(i)
        coeffs[i, active] = beta
    return coeffs, ridge_rows


def nirvar_forecast(fit: NirvarFit, last_residuals) -> np.ndarray:
    """One-step-ahead residual forecast: coeffs @ last residual cross-section."""
    return fit.coeffs @ np.asarray(last_residuals, dtype=float)


def fit_nirvar(residuals, dim="auto", n_clusters="auto", seed=0,
               gmm_restarts: int = 10) -> NirvarFit:
    """Full pipeline: embed the residual covariance, cluster, restrict, fit.

    With both left on 'auto' the cluster count equals the embedding dimension.
    """
    x = np.asarray(residuals, dtype=float)
    n, t = x.shape
    d = embedding_dimension(x) if dim in (None, "auto") else int(dim)
    gamma = x @ x.T / t
    embedding = spectral_embed(gamma, d)
    k = d if n_clusters in (None, "auto") else int(n_clusters)
    labels = cluster_gmm(embedding, k, seed, n_init=gmm_restarts)
    restriction = build_restriction(labels)
    coeffs, ridge_rows = restricted_var_ols(x, restriction)
    return NirvarFit(d, k, labels, restriction, coeffs, embedding, ridge_rows)
