import numpy as np
import pytest

from fnirvar.graphs import (
    BlockModelSpec,
    build_phi,
    sample_adjacency,
    sample_assignments,
    sample_weights,
)
from fnirvar.util import spectral_radius


def two_block_spec(diag=0.9, off=0.1):
    return BlockModelSpec(2, np.array([[diag, off], [off, diag]]), np.array([0.5, 0.5]))


def test_single_block_all_ones():
    spec = BlockModelSpec(1, np.array([[0.5]]), np.array([1.0]))
    labels = sample_assignments(spec, 20, seed=0)
    assert np.array_equal(labels, np.ones(20))


def test_assignments_require_positive_count():
    with pytest.raises(ValueError, match="at least 1"):
        sample_assignments(two_block_spec(), 0, seed=0)


def test_assignment_frequencies_within_3_se():
    labels = sample_assignments(two_block_spec(), 10_000, seed=1)
    freq = np.mean(labels == 1)
    se = np.sqrt(0.25 / 10_000)
    assert abs(freq - 0.5) < 3 * se


def test_assignments_deterministic():
    spec = two_block_spec()
    assert np.array_equal(sample_assignments(spec, 50, seed=7),
                          sample_assignments(spec, 50, seed=7))


def test_adjacency_extremes():
    ones = BlockModelSpec(2, np.ones((2, 2)), np.array([0.5, 0.5]))
    labels = sample_assignments(ones, 8, seed=0)
    assert np.array_equal(sample_adjacency(ones, labels, seed=1), np.ones((8, 8)))
    zeros = BlockModelSpec(2, np.zeros((2, 2)), np.array([0.5, 0.5]))
    assert np.array_equal(sample_adjacency(zeros, labels, seed=1), np.eye(8))


def test_adjacency_unit_diagonal_and_block_rate():
    spec = BlockModelSpec(4, np.full((4, 4), 0.1) + 0.8 * np.eye(4), np.full(4, 0.25))
    labels = sample_assignments(spec, 100, seed=2)
    adjacency = sample_adjacency(spec, labels, seed=3)
    assert np.array_equal(np.diag(adjacency), np.ones(100))
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(100, dtype=bool)
    rate = adjacency[same & off_diag].mean()
    assert 0.87 <= rate <= 0.93


def test_weight_row_means_follow_alternating_rule():
    # 10^4 per-row samples: 2500 draws of a 4x4 matrix
    labels = np.array([1, 2, 3, 4])
    draws = np.stack([sample_weights(labels, seed=s) for s in range(2500)])
    row_means = draws.mean(axis=(0, 2))
    se = 1.0 / np.sqrt(4 * 2500)
    for mean, target in zip(row_means, [1.0, -2.0, 3.0, -4.0]):
        assert abs(mean - target) < 3 * se


def test_weights_symmetrize_and_determinism():
    labels = np.array([1, 2, 1, 2, 3])
    sym = sample_weights(labels, seed=5, symmetrize=True)
    assert np.array_equal(sym, sym.T)
    assert np.array_equal(sample_weights(labels, seed=6), sample_weights(labels, seed=6))


def test_build_phi_identity_case():
    phi = build_phi(np.eye(2), np.eye(2), 0.9)
    assert np.allclose(phi, 0.9 * np.eye(2), atol=1e-12)


def test_build_phi_diagonal_case():
    phi = build_phi(np.ones((2, 2)), np.array([[2.0, 0.0], [0.0, 1.0]]), 0.9)
    assert np.allclose(phi, [[0.9, 0.0], [0.0, 0.45]], atol=1e-12)


def test_build_phi_hits_target_radius():
    rng = np.random.default_rng(8)
    for _ in range(5):
        adjacency = (rng.random((12, 12)) < 0.5).astype(float)
        np.fill_diagonal(adjacency, 1.0)
        weights = rng.standard_normal((12, 12))
        phi = build_phi(adjacency, weights, 0.9)
        assert spectral_radius(phi) == pytest.approx(0.9, rel=1e-8)
        # masking: zero pattern of phi matches the adjacency exactly
        assert np.all((phi != 0) <= (adjacency != 0))


def test_build_phi_rejects_nilpotent():
    adjacency = np.array([[0.0, 1.0], [0.0, 0.0]])  # hand-built, no unit diagonal
    weights = np.array([[0.0, 2.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="zero spectral radius"):
        build_phi(adjacency, weights, 0.9)


def test_non_psd_connection_warns():
    with pytest.warns(UserWarning, match="positive semi-definite"):
        BlockModelSpec(2, np.array([[0.1, 0.9], [0.9, 0.1]]), np.array([0.5, 0.5]))


def test_spectral_radius_power_iteration_oracle():
    rng = np.random.default_rng(9)
    for _ in range(5):
        matrix = np.abs(rng.standard_normal((50, 50)))  # Perron root is real, simple
        vec = np.ones(50) / np.sqrt(50)
        for _ in range(2000):
            nxt = matrix @ vec
            vec = nxt / np.linalg.norm(nxt)
        oracle = float(vec @ matrix @ vec)
        assert spectral_radius(matrix) == pytest.approx(oracle, rel=1e-6)
