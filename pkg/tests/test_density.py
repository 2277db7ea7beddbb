"""Density evaluation against independent oracles: direct formula sums,
quadrature normalization, and additivity."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from blockmoe import (BlockMoeModel, BlockPartition, Bounds, Dataset,
                      DecompositionError, ExpertParams, GatingParams,
                      ModelIndex, UnsupportedDegreeError, log_cond_density,
                      log_gating, log_joint_density, nll)
from blockmoe.density import gaussian_logpdf
from helpers import random_model


def scalar_model(weight=1.0, c=0.5, gamma=0.01, b=0.0, a=0.0, sigma=1.0):
    """K=1, D=1, L=1 affine model with the given parameters."""
    return BlockMoeModel(
        ModelIndex(1, 1, (BlockPartition.one_block(1),), 1),
        GatingParams(np.array([weight]), np.array([[c]]), np.array([[[gamma]]])),
        ExpertParams(np.array([[[b, a]]]), np.array([[[sigma]]])),
    )


def test_gaussian_logpdf_scalar_oracle():
    # direct formula: -(x-mu)^2/(2 s2) - ln sqrt(2 pi s2)
    x, mu, s2 = 0.7, 0.2, 1.7
    expected = -((x - mu) ** 2) / (2 * s2) - 0.5 * math.log(2 * math.pi * s2)
    got = gaussian_logpdf(np.array([x]), np.array([mu]), np.array([[s2]]))
    assert got == pytest.approx(expected, abs=1e-12)


def test_gaussian_logpdf_rejects_non_spd():
    with pytest.raises(DecompositionError):
        gaussian_logpdf(np.zeros(2), np.zeros(2),
                        np.array([[1.0, 2.0], [2.0, 1.0]]))


# --- gating -------------------------------------------------------------------

def test_single_gate_is_log_one():
    model = scalar_model()
    assert log_gating(model.gating, np.array([0.3]))[0] == pytest.approx(0.0)


def test_identical_gates_split_evenly():
    gating = GatingParams(np.array([0.5, 0.5]), np.array([[0.5], [0.5]]),
                          np.array([[[0.02]], [[0.02]]]))
    lg = log_gating(gating, np.array([0.4]))
    assert np.allclose(lg, math.log(0.5), atol=1e-12)


def test_gating_matches_direct_ratio_oracle():
    # two gates in one dimension evaluated by the direct density ratio
    pi = np.array([0.3, 0.7])
    c = np.array([[0.0], [1.0]])
    gam = np.array([[[1.0]], [[1.0]]])
    gating = GatingParams(pi, c, gam)
    y = 0.0
    dens = pi * np.array([
        math.exp(-((y - 0.0) ** 2) / 2) / math.sqrt(2 * math.pi),
        math.exp(-((y - 1.0) ** 2) / 2) / math.sqrt(2 * math.pi),
    ])
    oracle = np.log(dens / dens.sum())
    assert np.allclose(log_gating(gating, np.array([y])), oracle, atol=1e-12)


def test_gate_probabilities_sum_to_one():
    rng = np.random.default_rng(8)
    for _ in range(20):
        model = random_model(rng, n_clusters=int(rng.integers(1, 5)),
                             x_dim=2, y_dim=int(rng.integers(1, 3)))
        y = rng.uniform(0, 1, size=(7, model.y_dim))
        lg = log_gating(model.gating, y)
        assert np.allclose(np.exp(lg).sum(axis=1), 1.0, atol=1e-12)


# --- conditional density -------------------------------------------------------

def test_standard_normal_at_zero():
    model = scalar_model(b=0.0, a=0.0, sigma=1.0)
    got = log_cond_density(model, np.array([0.0]), np.array([0.5]))
    assert got == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)


def test_conditional_matches_two_term_oracle():
    rng = np.random.default_rng(9)
    model = random_model(rng, n_clusters=2, x_dim=2, y_dim=1, degree=1)
    x = rng.normal(size=2)
    y = np.array([0.4])
    lg = log_gating(model.gating, y)
    total = 0.0
    for k in range(2):
        mean = model.experts.coeffs[k] @ np.array([1.0, y[0]])
        total += math.exp(lg[k]) * math.exp(
            gaussian_logpdf(x, mean, model.experts.covs[k]))
    assert log_cond_density(model, x, y) == pytest.approx(math.log(total),
                                                          rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_conditional_normalizes_by_quadrature(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n_clusters=int(rng.integers(1, 4)), x_dim=1,
                         y_dim=1, degree=int(rng.integers(0, 3)))
    y = rng.uniform(0, 1, size=1)
    mass, _ = quad(lambda x: math.exp(log_cond_density(model, np.array([x]), y)),
                   -40.0, 40.0, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_relabeling_invariance():
    rng = np.random.default_rng(10)
    model = random_model(rng, n_clusters=3, x_dim=2, y_dim=1)
    perm = [2, 0, 1]
    permuted = BlockMoeModel(
        ModelIndex(3, model.index.degree,
                   tuple(model.index.blocks[k] for k in perm), 1),
        GatingParams(model.gating.weights[perm], model.gating.means[perm],
                     model.gating.covs[perm]),
        ExpertParams(model.experts.coeffs[perm], model.experts.covs[perm]),
        model.bounds,
    )
    x = rng.normal(size=(6, 2))
    y = rng.uniform(0, 1, size=(6, 1))
    assert np.allclose(log_cond_density(model, x, y),
                       log_cond_density(permuted, x, y), atol=1e-12)


# --- joint density --------------------------------------------------------------

def test_joint_equals_conditional_plus_marginal():
    rng = np.random.default_rng(11)
    model = random_model(rng, n_clusters=2, x_dim=3, y_dim=2, degree=1)
    x = rng.normal(size=(5, 3))
    y = rng.uniform(0, 1, size=(5, 2))
    marg = np.array([
        math.log(sum(
            model.gating.weights[k] * math.exp(
                gaussian_logpdf(y[i], model.gating.means[k],
                                model.gating.covs[k]))
            for k in range(2)))
        for i in range(5)
    ])
    assert np.allclose(log_joint_density(model, x, y),
                       log_cond_density(model, x, y) + marg, atol=1e-12)


def test_joint_at_origin_identity_params():
    d_x, d_y = 2, 1
    model = BlockMoeModel(
        ModelIndex(1, 1, (BlockPartition.one_block(d_x),), d_y),
        GatingParams(np.array([1.0]), np.zeros((1, d_y)), np.eye(d_y)[None]),
        ExpertParams(np.zeros((1, d_x, d_y + 1)), np.eye(d_x)[None]),
        Bounds(max_gating_mean=1.0),
    )
    got = log_joint_density(model, np.zeros(d_x), np.zeros(d_y))
    assert got == pytest.approx(-0.5 * (d_x + d_y) * math.log(2 * math.pi),
                                abs=1e-12)


def test_joint_rejects_higher_degree():
    rng = np.random.default_rng(12)
    model = random_model(rng, degree=2)
    with pytest.raises(UnsupportedDegreeError):
        log_joint_density(model, np.zeros(model.x_dim), np.zeros(model.y_dim))


# --- negative log-likelihood -----------------------------------------------------

def test_nll_single_point():
    rng = np.random.default_rng(13)
    model = random_model(rng)
    x = rng.normal(size=(1, model.x_dim))
    y = rng.uniform(0, 1, size=(1, model.y_dim))
    data = Dataset(x, y)
    assert nll(model, data) == pytest.approx(
        -log_cond_density(model, x[0], y[0]), abs=1e-12)


def test_nll_doubles_on_duplicated_data():
    rng = np.random.default_rng(14)
    model = random_model(rng)
    x = rng.normal(size=(6, model.x_dim))
    y = rng.uniform(0, 1, size=(6, model.y_dim))
    single = nll(model, Dataset(x, y))
    doubled = nll(model, Dataset(np.vstack([x, x]), np.vstack([y, y])))
    assert doubled == pytest.approx(2 * single, rel=1e-12)


def test_nll_matches_per_point_loop():
    rng = np.random.default_rng(15)
    model = random_model(rng, n_clusters=3, x_dim=2, y_dim=2, degree=2)
    x = rng.normal(size=(8, 2))
    y = rng.uniform(0, 1, size=(8, 2))
    loop = -sum(log_cond_density(model, x[i], y[i]) for i in range(8))
    assert nll(model, Dataset(x, y)) == pytest.approx(loop, abs=1e-10)


def test_nll_additive_over_concatenation():
    rng = np.random.default_rng(16)
    model = random_model(rng)
    xa = rng.normal(size=(4, model.x_dim))
    ya = rng.uniform(0, 1, size=(4, model.y_dim))
    xb = rng.normal(size=(3, model.x_dim))
    yb = rng.uniform(0, 1, size=(3, model.y_dim))
    total = nll(model, Dataset(np.vstack([xa, xb]), np.vstack([ya, yb])))
    assert total == pytest.approx(nll(model, Dataset(xa, ya))
                                  + nll(model, Dataset(xb, yb)), rel=1e-12)
