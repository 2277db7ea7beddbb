"""Block partitions of response coordinates.

A partition groups the D response coordinates; expert covariance matrices
are constrained to be zero between groups (block-diagonal up to a
permutation). Partitions are kept in a canonical form so that reordering
groups or reordering members inside a group yields the same object.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidPartitionError, ShapeError
from .validation import check_symmetric, chol_lower

__all__ = [
    "BlockPartition",
    "BlockStructureSet",
    "canonicalize",
    "cov_dim",
    "project_to_blocks",
    "detect_candidates",
]


@dataclass(frozen=True)
class BlockPartition:
    """Canonical partition of coordinates 0..D-1 into disjoint groups.

    Groups are stored sorted internally and ordered by their smallest
    member, which is the canonical representative of the equivalence
    class generated by group reordering and within-group permutation.
    """

    groups: tuple

    def __init__(self, groups):
        seen = set()
        cleaned = []
        for g in groups:
            g = tuple(int(i) for i in g)
            if not g:
                raise InvalidPartitionError("empty group in partition")
            if len(set(g)) != len(g):
                raise InvalidPartitionError(f"duplicate index within group {g}")
            seen.update(g)
            cleaned.append(tuple(sorted(g)))
        n = sum(len(g) for g in cleaned)
        if seen != set(range(n)):
            missing = sorted(set(range(max(seen, default=0) + 1)) - seen)
            raise InvalidPartitionError(
                f"groups do not partition 0..{n - 1} (missing or out-of-range: {missing})"
            )
        cleaned.sort(key=lambda g: g[0])
        object.__setattr__(self, "groups", tuple(cleaned))

    @property
    def dim(self):
        """Number of coordinates covered by the partition."""
        return sum(len(g) for g in self.groups)

    @classmethod
    def singletons(cls, dim):
        return cls([(i,) for i in range(dim)])

    @classmethod
    def one_block(cls, dim):
        return cls([tuple(range(dim))])

    @classmethod
    def from_one_based(cls, groups):
        return cls([[i - 1 for i in g] for g in groups])

    def to_one_based(self):
        return [[i + 1 for i in g] for g in self.groups]

    def labels(self):
        """Group label of each coordinate, as a length-D integer array."""
        lab = np.empty(self.dim, dtype=int)
        for j, g in enumerate(self.groups):
            lab[list(g)] = j
        return lab

    def mask(self):
        """Boolean D x D mask, True where entries may be nonzero."""
        lab = self.labels()
        return lab[:, None] == lab[None, :]

    def __lt__(self, other):
        return self.groups < other.groups


def canonicalize(groups):
    """Canonical representative of a raw partition (0-based index groups)."""
    if isinstance(groups, BlockPartition):
        return groups
    return BlockPartition(groups)


def cov_dim(partition, convention="full"):
    """Number of free covariance parameters under a block constraint.

    ``full`` counts every within-block entry of a symmetric matrix
    including the diagonal, sum of c(c+1)/2 over group sizes c. The
    ``offdiag`` convention counts strictly off-diagonal within-block
    entries only, sum of c(c-1)/2; it differs from ``full`` by exactly D.
    """
    sizes = [len(g) for g in partition.groups]
    if convention == "full":
        return sum(c * (c + 1) // 2 for c in sizes)
    if convention == "offdiag":
        return sum(c * (c - 1) // 2 for c in sizes)
    raise ValueError(f"unknown convention {convention!r}")


def project_to_blocks(matrix, partition, tol=1e-10):
    """Zero out every entry of a symmetric matrix that crosses groups.

    Entrywise projection onto the block pattern; it is also the
    Frobenius-nearest block-conforming matrix, and for a weighted sample
    covariance it coincides with the Gaussian MLE constrained to the
    pattern (the likelihood factorizes over groups).
    """
    m = check_symmetric(matrix, tol=tol, name="matrix")
    if m.shape[0] != partition.dim:
        raise ShapeError(
            f"matrix of size {m.shape[0]} does not match partition over {partition.dim}"
        )
    out = np.where(partition.mask(), m, 0.0)
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class BlockStructureSet:
    """Deduplicated per-cluster partition tuples, sorted by total parameter
    count (sparsest first). Always contains the all-singletons structure."""

    candidates: tuple

    def __post_init__(self):
        if len(set(self.candidates)) != len(self.candidates):
            raise InvalidPartitionError("duplicate structures in candidate set")

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)


def _threshold_partition(abs_corr, lam):
    adjacency = (abs_corr >= lam).astype(np.int8)
    np.fill_diagonal(adjacency, 1)
    n_comp, labels = connected_components(adjacency, directed=False)
    groups = [tuple(np.flatnonzero(labels == c)) for c in range(n_comp)]
    return BlockPartition(groups)


def detect_candidates(residual_covs, threshold_count=8, max_structures=20,
                      combine="matched"):
    """Data-driven candidate block structures from per-cluster residual
    covariances.

    Each covariance is converted to absolute correlation; thresholds are
    taken on a per-cluster grid of off-diagonal |corr| quantiles from high
    to low, and the connected components of each thresholded graph give a
    partition. Partitions from matching grid positions are combined into
    one structure per position (``combine="matched"``); ``"shared"``
    instead pools every detected partition and replicates it across
    clusters. The all-singletons structure is always included, and the
    result is sorted by total covariance dimension and truncated.
    """
    if threshold_count < 1:
        raise ValueError("threshold_count must be >= 1")
    covs = [np.asarray(c, dtype=float) for c in residual_covs]
    n_clusters = len(covs)
    dim = covs[0].shape[0]
    per_cluster = []
    for cov in covs:
        check_symmetric(cov, name="residual covariance")
        chol_lower(cov, name="residual covariance")
        d = 1.0 / np.sqrt(np.diag(cov))
        abs_corr = np.abs(cov * d[:, None] * d[None, :])
        off = abs_corr[~np.eye(dim, dtype=bool)]
        if off.size == 0:
            lams = np.zeros(threshold_count)
        else:
            qs = np.linspace(1.0, 0.0, threshold_count)
            lams = np.quantile(off, qs)
        per_cluster.append([_threshold_partition(abs_corr, lam) for lam in lams])

    structures = []
    if combine == "matched":
        for j in range(threshold_count):
            structures.append(tuple(per_cluster[k][j] for k in range(n_clusters)))
    elif combine == "shared":
        pool = sorted({p for row in per_cluster for p in row})
        for p in pool:
            structures.append(tuple(p for _ in range(n_clusters)))
    else:
        raise ValueError(f"unknown combine mode {combine!r}")

    singles = tuple(BlockPartition.singletons(dim) for _ in range(n_clusters))
    structures.append(singles)

    unique = sorted(set(structures),
                    key=lambda s: (sum(cov_dim(p, "full") for p in s),
                                   tuple(p.groups for p in s)))
    return BlockStructureSet(tuple(unique[:max_structures]))
