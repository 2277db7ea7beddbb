"""Domain types, monomial basis, and dimension counting."""

import math

import numpy as np
import pytest

from blockmoe import (BlockMoeModel, BlockPartition, Bounds,
                      BoundsViolationError, Dataset, ExpertParams,
                      GatingParams, ModelIndex, ShapeError,
                      enumerate_monomials, eval_poly_mean, model_dim,
                      monomial_features, n_monomials)
from helpers import random_model, random_partition


# --- monomial basis ---------------------------------------------------------

def brute_force_monomials(degree, y_dim):
    """Independent enumeration: every tuple in {0..degree}^L with sum <= d."""
    out = []
    grid = np.indices((degree + 1,) * y_dim).reshape(y_dim, -1).T
    for e in grid:
        if e.sum() <= degree:
            out.append(tuple(int(v) for v in e))
    return set(out)


def test_monomials_degree1_two_vars():
    assert enumerate_monomials(1, 2) == [(0, 0), (1, 0), (0, 1)]


def test_monomials_degree2_one_var():
    assert enumerate_monomials(2, 1) == [(0,), (1,), (2,)]


def test_monomials_degree2_two_vars_count():
    exps = enumerate_monomials(2, 2)
    assert len(exps) == 6
    assert set(exps) == brute_force_monomials(2, 2)


@pytest.mark.parametrize("degree,y_dim", [(0, 1), (1, 3), (3, 2), (4, 1)])
def test_monomials_complete_and_graded(degree, y_dim):
    exps = enumerate_monomials(degree, y_dim)
    assert exps[0] == (0,) * y_dim
    assert len(exps) == n_monomials(degree, y_dim) == math.comb(degree + y_dim, y_dim)
    assert set(exps) == brute_force_monomials(degree, y_dim)
    grades = [sum(e) for e in exps]
    assert grades == sorted(grades)
    # stable across calls
    assert exps == enumerate_monomials(degree, y_dim)


# --- polynomial mean evaluation ---------------------------------------------

def test_poly_mean_zero_coeffs():
    coeffs = np.zeros((3, n_monomials(2, 2)))
    assert np.array_equal(eval_poly_mean(coeffs, np.array([0.3, 0.7])),
                          np.zeros(3))


def test_poly_mean_affine_case():
    # degree 1 in one variable: column order (intercept, slope)
    b, a, y0 = 0.4, -1.3, 0.6
    coeffs = np.array([[b, a]])
    assert eval_poly_mean(coeffs, np.array([y0]))[0] == pytest.approx(b + a * y0,
                                                                      abs=1e-15)


def test_poly_mean_matches_termwise_oracle():
    rng = np.random.default_rng(42)
    exps = enumerate_monomials(2, 2)
    coeffs = rng.normal(size=(4, len(exps)))
    y = np.array([0.3, 0.7])
    oracle = np.zeros(4)
    for j in range(4):
        for c, e in zip(coeffs[j], exps):
            oracle[j] += c * y[0] ** e[0] * y[1] ** e[1]
    assert np.allclose(eval_poly_mean(coeffs, y), oracle, atol=1e-12)


def test_poly_mean_shape_mismatch():
    # no complete monomial basis in 2 variables has 5 elements (1, 3, 6, ...)
    with pytest.raises(ShapeError):
        eval_poly_mean(np.zeros((2, 5)), np.array([0.5, 0.5]))


# --- bounds and type invariants ---------------------------------------------

def test_bounds_invariants():
    with pytest.raises(BoundsViolationError):
        Bounds(min_weight=0.0)
    with pytest.raises(BoundsViolationError):
        Bounds(gating_eig_min=2.0, gating_eig_max=1.0)
    with pytest.raises(BoundsViolationError):
        Bounds(max_coeff=-1.0)
    Bounds(min_weight=0.6).validate_weight_count(1)
    with pytest.raises(BoundsViolationError):
        Bounds(min_weight=0.6).validate_weight_count(2)


def test_gating_weights_must_normalize():
    with pytest.raises(BoundsViolationError):
        GatingParams(np.array([0.5, 0.6]), np.zeros((2, 1)),
                     np.stack([np.eye(1)] * 2))


def test_model_rejects_cross_block_entries():
    rng = np.random.default_rng(0)
    part = BlockPartition([(0,), (1,)])
    bad_cov = np.array([[1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(BoundsViolationError):
        BlockMoeModel(
            ModelIndex(1, 1, (part,), 1),
            GatingParams(np.array([1.0]), np.full((1, 1), 0.5),
                         np.full((1, 1, 1), 0.01)),
            ExpertParams(rng.normal(size=(1, 2, 2)), bad_cov[None]),
        )


def test_model_rejects_out_of_bounds_eigenvalues():
    part = BlockPartition([(0, 1)])
    cov = np.array([[5.0, 0.0], [0.0, 5.0]])
    bounds = Bounds(expert_eig_max=1.0)
    with pytest.raises(BoundsViolationError):
        BlockMoeModel(
            ModelIndex(1, 1, (part,), 1),
            GatingParams(np.array([1.0]), np.full((1, 1), 0.5),
                         np.full((1, 1, 1), 0.01)),
            ExpertParams(np.zeros((1, 2, 2)), cov[None]),
            bounds,
        )


def test_model_arrays_are_immutable():
    model = random_model(np.random.default_rng(1))
    with pytest.raises(ValueError):
        model.gating.weights[0] = 0.9


def test_dataset_rescale_modes():
    x = np.zeros((3, 2))
    y = np.array([[0.0], [2.0], [4.0]])
    with pytest.warns(UserWarning):
        Dataset.from_arrays(x, y, rescale="warn")
    with pytest.raises(ShapeError):
        Dataset.from_arrays(x, y, rescale="error")
    data = Dataset.from_arrays(x, y, rescale="affine")
    assert data.y.min() == 0.0 and data.y.max() == 1.0
    assert np.allclose(data.y * data.y_scale + data.y_shift, y)


# --- dimension counting ------------------------------------------------------

def count_params_brute_force(index, convention):
    """Independent parameter count by explicit slot enumeration."""
    K, L, D = index.n_clusters, index.y_dim, index.x_dim
    count = K - 1                      # weights on the simplex
    count += K * L                     # gating means
    count += K * (L * (L + 1) // 2)    # symmetric gating covariances
    count += K * D * len(enumerate_monomials(index.degree, L))
    for part in index.blocks:
        for g in part.groups:
            for a_pos, i in enumerate(g):
                for j in g[a_pos:]:
                    if i == j and convention == "offdiag":
                        continue
                    count += 1
    return count


def test_model_dim_full_block_formula():
    # one cluster, affine experts: 1 + D(L+1) + D(D+1)/2 + L(L+1)/2 + L - 1
    index = ModelIndex.full(1, 1, 2, 1)
    assert model_dim(index, "full") == 9


def test_model_dim_singletons_drops_offdiagonal():
    index = ModelIndex.diagonal(1, 1, 2, 1)
    assert model_dim(index, "full") == 8


def test_offdiag_cov_term():
    from blockmoe import cov_dim
    assert cov_dim(BlockPartition.one_block(3), "offdiag") == 3


@pytest.mark.parametrize("K", [1, 2, 4])
@pytest.mark.parametrize("L", [1, 3])
def test_full_block_affine_reduces_to_unstructured_count(K, L):
    for D in range(1, 7):
        index = ModelIndex.full(K, 1, D, L)
        expected = K * (1 + D * (L + 1) + D * (D + 1) // 2
                        + L * (L + 1) // 2 + L) - 1
        assert model_dim(index, "full") == expected


def test_model_dim_matches_brute_force_on_grid():
    rng = np.random.default_rng(7)
    for K in range(1, 5):
        for D in range(1, 7):
            for L in range(1, 4):
                for d in range(0, 3):
                    for _ in range(3):
                        blocks = tuple(random_partition(rng, D)
                                       for _ in range(K))
                        index = ModelIndex(K, d, blocks, L)
                        for conv in ("full", "offdiag"):
                            assert model_dim(index, conv) == \
                                count_params_brute_force(index, conv)
