"""Block-structured random graphs and the normalised network coefficient matrix.

Vertices carry community labels drawn from a categorical prior; edges form
independently with a probability depending only on the endpoint communities,
and every vertex keeps a self-loop. Edge weights are Gaussian with a
community-dependent row mean; the Hadamard product of adjacency and weights,
rescaled to a target spectral radius, gives the lag-one coefficient matrix of
the network autoregression.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from fnirvar.util import spectral_radius


@dataclass(frozen=True)
class BlockModelSpec:
    """Community count, connection probabilities and label prior.

    connection: (K, K) matrix of edge probabilities, entries in [0, 1].
    prior: length-K strictly positive probabilities summing to one.
    Assortative graphs have a positive semi-definite connection matrix; a
    non-PSD matrix is accepted with a warning.
    """

    n_blocks: int
    connection: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        connection = np.asarray(self.connection, dtype=float)
        prior = np.asarray(self.prior, dtype=float)
        object.__setattr__(self, "connection", connection)
        object.__setattr__(self, "prior", prior)
        k = self.n_blocks
        if connection.shape != (k, k):
            raise ValueError(f"connection matrix must be {k}x{k}, got {connection.shape}")
        if (connection < 0).any() or (connection > 1).any():
            raise ValueError("connection probabilities must lie in [0, 1]")
        if prior.shape != (k,):
            raise ValueError(f"prior must have length {k}")
        if (prior <= 0).any() or abs(prior.sum() - 1.0) > 1e-12:
            raise ValueError("prior must be strictly positive and sum to 1")
        sym = (connection + connection.T) / 2.0
        if np.linalg.eigvalsh(sym).min() < -1e-10:
            warnings.warn("connection matrix is not positive semi-definite "
                          "(graph will not be assortative)", stacklevel=2)


def sample_assignments(spec: BlockModelSpec, n: int, seed) -> np.ndarray:
    """Draw n i.i.d. community labels in 1..K from the prior."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return rng.choice(np.arange(1, spec.n_blocks + 1), size=n, p=spec.prior)


def sample_adjacency(spec: BlockModelSpec, labels, seed) -> np.ndarray:
    """Directed binary adjacency with unit diagonal, edges Bernoulli by block pair."""
    labels = np.asarray(labels, dtype=int)
    if labels.min() < 1 or labels.max() > spec.n_blocks:
        raise ValueError("labels must lie in 1..K")
    rng = np.random.default_rng(seed)
    probs = spec.connection[labels - 1][:, labels - 1]
    adjacency = (rng.random(probs.shape) < probs).astype(float)
    np.fill_diagonal(adjacency, 1.0)
    return adjacency


def sample_weights(labels, seed, symmetrize: bool = False) -> np.ndarray:
    """Gaussian weight matrix, row i centred at (-1)^(z(i)+1) * z(i), unit variance."""
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    rng = np.random.default_rng(seed)
    row_means = np.where(labels % 2 == 1, labels, -labels).astype(float)
    weights = rng.normal(loc=row_means[:, None], scale=1.0, size=(n, n))
    if symmetrize:
        weights = (weights + weights.T) / 2.0
    return weights


def build_phi(adjacency, weights, target_rho: float) -> np.ndarray:
    """Mask weights by the adjacency and rescale to the target spectral radius."""
    if not 0.0 < target_rho < 1.0:
        raise ValueError(f"target spectral radius must be in (0, 1), got {target_rho}")
    masked = np.asarray(adjacency, dtype=float) * np.asarray(weights, dtype=float)
    rho = spectral_radius(masked)
    if rho <= 0.0:
        raise ValueError("masked weight matrix has zero spectral radius, cannot rescale")
    return masked * (target_rho / rho)
