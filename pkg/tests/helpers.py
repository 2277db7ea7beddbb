"""Shared builders for randomized-but-bounded test models."""

import numpy as np

from blockmoe import (BlockMoeModel, BlockPartition, Bounds, ExpertParams,
                      GatingParams, ModelIndex, n_monomials)


def random_partition(rng, dim):
    labels = rng.integers(0, max(1, dim // 2 + 1), size=dim)
    groups = [tuple(np.flatnonzero(labels == g)) for g in np.unique(labels)]
    return BlockPartition(groups)


def random_spd(rng, dim, eig_lo, eig_hi):
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = rng.uniform(eig_lo, eig_hi, size=dim)
    return (q * eigs) @ q.T


def random_block_spd(rng, partition, eig_lo, eig_hi):
    dim = partition.dim
    cov = np.zeros((dim, dim))
    for g in partition.groups:
        cov[np.ix_(g, g)] = random_spd(rng, len(g), eig_lo, eig_hi)
    return 0.5 * (cov + cov.T)


def random_model(rng, n_clusters=2, x_dim=2, y_dim=1, degree=1, blocks=None,
                 coeff_scale=1.0, expert_eigs=(0.3, 3.0),
                 gate_eigs=(0.05**2, 0.15**2)):
    """A valid model with wide bounds; means stay moderate so D=1
    quadrature over [-40, 40] captures all the mass."""
    K, D, L = n_clusters, x_dim, y_dim
    if blocks is None:
        blocks = tuple(random_partition(rng, D) for _ in range(K))
    elif isinstance(blocks, BlockPartition):
        blocks = tuple(blocks for _ in range(K))
    index = ModelIndex(K, degree, blocks, L)
    weights = rng.dirichlet(np.full(K, 5.0))
    weights = 0.9 * weights + 0.1 / K     # keep weights off the floor
    weights = weights / weights.sum()
    means = rng.uniform(0.2, 0.8, size=(K, L))
    gcovs = np.stack([random_spd(rng, L, *gate_eigs) for _ in range(K)])
    m = n_monomials(degree, L)
    coeffs = rng.uniform(-coeff_scale, coeff_scale, size=(K, D, m))
    ecovs = np.stack([random_block_spd(rng, blocks[k], *expert_eigs)
                      for k in range(K)])
    return BlockMoeModel(index, GatingParams(weights, means, gcovs),
                         ExpertParams(coeffs, ecovs), Bounds())
