"""Shared helpers: deterministic RNG streams and small linear-algebra utilities."""

from __future__ import annotations

import numpy as np

# Stable per-module stream tags so parallel replicates never share a stream.
STREAM_ASSIGNMENTS = 1
STREAM_ADJACENCY = 2
STREAM_WEIGHTS = 3
STREAM_SIMULATE = 4
STREAM_GMM = 5
STREAM_STUDY = 6
STREAM_BACKTEST = 7


def rng_from(seed, *key) -> np.random.Generator:
    """Generator for (seed, key...) — same tuple, same stream, across runs."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def derive_int_seed(seed, *key) -> int:
    """Deterministic 31-bit integer seed, for libraries that take plain ints."""
    return int(rng_from(seed, *key).integers(2**31 - 1))


def spectral_radius(matrix) -> float:
    """Largest eigenvalue modulus of a (possibly non-symmetric) square matrix."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def fix_eigenvector_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=float)
    for j in range(vectors.shape[1]):
        i = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[i, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return vectors


def psd_sqrt(matrix) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    matrix = np.asarray(matrix, dtype=float)
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2.0)
    if vals.min() < -1e-10 * max(1.0, vals.max()):
        raise ValueError("matrix is not positive semi-definite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
