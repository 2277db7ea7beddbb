"""Core model types: bounded gating and expert parameters, the model index,
datasets, the polynomial mean basis, and parameter counting.

The conditional density being modeled is a Gaussian-gated mixture: gate k
is proportional to pi_k * N(y; c_k, Gamma_k) over the low-dimensional
covariate y, and expert k emits the high-dimensional response x from
N(poly_mean_k(y), Sigma_k) with Sigma_k block-diagonal under the cluster's
partition.
"""

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .blocks import BlockPartition, cov_dim
from .errors import BoundsViolationError, ShapeError
from .validation import as_matrix, check_symmetric

__all__ = [
    "Bounds",
    "GatingParams",
    "ExpertParams",
    "ModelIndex",
    "BlockMoeModel",
    "Dataset",
    "enumerate_monomials",
    "monomial_features",
    "eval_poly_mean",
    "n_monomials",
    "model_dim",
]

_EIG_RTOL = 1e-8  # slack for eigenvalue bound checks on constructed models


def _freeze(a):
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Bounds:
    """Compactness bounds on the parameter space.

    All defaults are wide enough to be practically inactive; tighten them
    to make the EM projections enforce a genuinely bounded space.
    """

    min_weight: float = 1e-6          # lower bound on each mixture weight
    max_gating_mean: float = 1e6      # sup-norm bound on gating means
    gating_eig_min: float = 1e-6
    gating_eig_max: float = 1e6
    expert_eig_min: float = 1e-6
    expert_eig_max: float = 1e6
    max_coeff: float = 1e6            # sup-norm bound on polynomial coefficients

    def __post_init__(self):
        if not 0 < self.min_weight <= 1:
            raise BoundsViolationError("min_weight must lie in (0, 1]")
        if not 0 < self.gating_eig_min <= self.gating_eig_max:
            raise BoundsViolationError("need 0 < gating_eig_min <= gating_eig_max")
        if not 0 < self.expert_eig_min <= self.expert_eig_max:
            raise BoundsViolationError("need 0 < expert_eig_min <= expert_eig_max")
        if not self.max_coeff > 0:
            raise BoundsViolationError("max_coeff must be positive")
        if not self.max_gating_mean > 0:
            raise BoundsViolationError("max_gating_mean must be positive")

    def validate_weight_count(self, n_clusters):
        if self.min_weight > 1.0 / n_clusters + 1e-15:
            raise BoundsViolationError(
                f"min_weight {self.min_weight} > 1/{n_clusters}; no valid weight vector"
            )


def _check_eigs(mat, lo, hi, what):
    w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    scale = max(1.0, hi)
    if w[0] < lo - _EIG_RTOL * scale or w[-1] > hi + _EIG_RTOL * scale:
        raise BoundsViolationError(
            f"{what} eigenvalues [{w[0]:.3e}, {w[-1]:.3e}] outside [{lo:.3e}, {hi:.3e}]"
        )


@dataclass(frozen=True)
class GatingParams:
    """Mixture weights plus per-cluster Gaussian gate parameters over y."""

    weights: np.ndarray      # (K,)
    means: np.ndarray        # (K, L)
    covs: np.ndarray         # (K, L, L)

    def __post_init__(self):
        object.__setattr__(self, "weights", _freeze(self.weights))
        object.__setattr__(self, "means", _freeze(self.means))
        object.__setattr__(self, "covs", _freeze(self.covs))
        k = self.weights.shape[0]
        if self.means.ndim != 2 or self.means.shape[0] != k:
            raise ShapeError("gating means must have shape (K, L)")
        L = self.means.shape[1]
        if self.covs.shape != (k, L, L):
            raise ShapeError("gating covariances must have shape (K, L, L)")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise BoundsViolationError("mixture weights must sum to 1 within 1e-12")

    @property
    def n_clusters(self):
        return self.weights.shape[0]

    @property
    def y_dim(self):
        return self.means.shape[1]

    def validate_bounds(self, bounds):
        if np.any(self.weights < bounds.min_weight - 1e-15):
            raise BoundsViolationError("mixture weight below its lower bound")
        if np.max(np.abs(self.means)) > bounds.max_gating_mean * (1 + 1e-12):
            raise BoundsViolationError("gating mean exceeds its sup-norm bound")
        for k in range(self.n_clusters):
            _check_eigs(self.covs[k], bounds.gating_eig_min,
                        bounds.gating_eig_max, f"gating covariance {k}")


@dataclass(frozen=True)
class ExpertParams:
    """Per-cluster polynomial coefficient matrices and block covariances."""

    coeffs: np.ndarray       # (K, D, M)
    covs: np.ndarray         # (K, D, D)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _freeze(self.coeffs))
        object.__setattr__(self, "covs", _freeze(self.covs))
        if self.coeffs.ndim != 3:
            raise ShapeError("expert coefficients must have shape (K, D, M)")
        k, d, _ = self.coeffs.shape
        if self.covs.shape != (k, d, d):
            raise ShapeError("expert covariances must have shape (K, D, D)")

    @property
    def n_clusters(self):
        return self.coeffs.shape[0]

    @property
    def x_dim(self):
        return self.coeffs.shape[1]

    def validate_bounds(self, bounds, blocks):
        if np.max(np.abs(self.coeffs)) > bounds.max_coeff * (1 + 1e-12):
            raise BoundsViolationError("expert coefficient exceeds its sup-norm bound")
        for k in range(self.n_clusters):
            cov = self.covs[k]
            check_symmetric(cov, name=f"expert covariance {k}")
            if np.any(cov[~blocks[k].mask()] != 0.0):
                raise BoundsViolationError(
                    f"expert covariance {k} has nonzero entries across blocks"
                )
            _check_eigs(cov, bounds.expert_eig_min, bounds.expert_eig_max,
                        f"expert covariance {k}")


@dataclass(frozen=True)
class ModelIndex:
    """A point (K, d, B) in the model collection: cluster count, polynomial
    degree, and per-cluster block partitions of the response coordinates."""

    n_clusters: int
    degree: int
    blocks: tuple            # K block partitions over the D response coords
    y_dim: int

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.n_clusters < 1:
            raise ValueError("need at least one cluster")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if self.y_dim < 1:
            raise ValueError("y_dim must be >= 1")
        if len(self.blocks) != self.n_clusters:
            raise ShapeError("need one block partition per cluster")
        dims = {b.dim for b in self.blocks}
        if len(dims) != 1:
            raise ShapeError("all block partitions must cover the same dimension")

    @property
    def x_dim(self):
        return self.blocks[0].dim

    @property
    def n_basis(self):
        return n_monomials(self.degree, self.y_dim)

    def sort_key(self):
        return (self.n_clusters, self.degree,
                tuple(b.groups for b in self.blocks))

    @classmethod
    def full(cls, n_clusters, degree, x_dim, y_dim):
        blocks = tuple(BlockPartition.one_block(x_dim) for _ in range(n_clusters))
        return cls(n_clusters, degree, blocks, y_dim)

    @classmethod
    def diagonal(cls, n_clusters, degree, x_dim, y_dim):
        blocks = tuple(BlockPartition.singletons(x_dim) for _ in range(n_clusters))
        return cls(n_clusters, degree, blocks, y_dim)


@dataclass(frozen=True)
class BlockMoeModel:
    """Full parameter vector of the mixture together with its bounding box."""

    index: ModelIndex
    gating: GatingParams
    experts: ExpertParams
    bounds: Bounds = field(default_factory=Bounds)

    def __post_init__(self):
        idx = self.index
        if self.gating.n_clusters != idx.n_clusters or self.experts.n_clusters != idx.n_clusters:
            raise ShapeError("cluster counts disagree between index and parameters")
        if self.gating.y_dim != idx.y_dim:
            raise ShapeError("gating dimension disagrees with the index")
        if self.experts.x_dim != idx.x_dim:
            raise ShapeError("expert dimension disagrees with the block partitions")
        if self.experts.coeffs.shape[2] != idx.n_basis:
            raise ShapeError(
                f"expected {idx.n_basis} monomial coefficients per response "
                f"coordinate, got {self.experts.coeffs.shape[2]}"
            )
        self.bounds.validate_weight_count(idx.n_clusters)
        self.gating.validate_bounds(self.bounds)
        self.experts.validate_bounds(self.bounds, idx.blocks)

    @property
    def n_clusters(self):
        return self.index.n_clusters

    @property
    def x_dim(self):
        return self.index.x_dim

    @property
    def y_dim(self):
        return self.index.y_dim

    def dim(self, convention="full"):
        return model_dim(self.index, convention)


@dataclass(frozen=True)
class Dataset:
    """Paired sample: high-dimensional responses x and covariates y in [0,1]^L.

    ``y_shift``/``y_scale`` record the affine rescaling applied when the
    dataset was constructed with ``rescale="affine"``; predictions and
    densities are expressed in the rescaled coordinates.
    """

    x: np.ndarray            # (n, D)
    y: np.ndarray            # (n, L)
    y_shift: np.ndarray = None
    y_scale: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "x", _freeze(as_matrix(self.x, "x")))
        object.__setattr__(self, "y", _freeze(as_matrix(self.y, "y")))
        if self.x.shape[0] != self.y.shape[0]:
            raise ShapeError("x and y must have the same number of rows")
        if self.x.shape[0] < 1:
            raise ShapeError("dataset must contain at least one observation")
        if self.y_shift is not None:
            object.__setattr__(self, "y_shift", _freeze(self.y_shift))
            object.__setattr__(self, "y_scale", _freeze(self.y_scale))

    @classmethod
    def from_arrays(cls, x, y, rescale="warn"):
        """Build a dataset, handling covariates outside the unit box.

        rescale="warn" keeps the data and warns; "affine" maps each y
        column onto [0, 1] and records the transform; "error" raises.
        """
        x = as_matrix(x, "x")
        y = as_matrix(y, "y")
        inside = y.min() >= 0.0 and y.max() <= 1.0 if y.size else True
        if inside or rescale == "ignore":
            return cls(x, y)
        if rescale == "error":
            raise ShapeError("covariates y fall outside [0, 1]")
        if rescale == "warn":
            warnings.warn("covariates y fall outside [0, 1]; densities assume "
                          "a bounded covariate box", stacklevel=2)
            return cls(x, y)
        if rescale == "affine":
            lo = y.min(axis=0)
            hi = y.max(axis=0)
            scale = np.where(hi > lo, hi - lo, 1.0)
            return cls(x, (y - lo) / scale, y_shift=lo, y_scale=scale)
        raise ValueError(f"unknown rescale mode {rescale!r}")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def x_dim(self):
        return self.x.shape[1]

    @property
    def y_dim(self):
        return self.y.shape[1]


def enumerate_monomials(degree, y_dim):
    """Multi-indices r with |r| <= degree, graded lexicographic, intercept
    first. The result has C(degree + y_dim, y_dim) entries and fixes the
    coefficient layout used everywhere (including serialization)."""
    if degree < 0 or y_dim < 1:
        raise ValueError("need degree >= 0 and y_dim >= 1")
    out = []
    for total in range(degree + 1):
        grade = set(combinations_with_replacement(range(y_dim), total))
        exps = []
        for combo in grade:
            e = [0] * y_dim
            for pos in combo:
                e[pos] += 1
            exps.append(tuple(e))
        out.extend(sorted(exps, reverse=True))
    return out


def n_monomials(degree, y_dim):
    return math.comb(degree + y_dim, y_dim)


def monomial_features(y, degree):
    """Feature matrix of all monomials up to ``degree``: (n, M) for y (n, L)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[None, :]
    exps = enumerate_monomials(degree, y.shape[1])
    cols = [np.prod(y ** np.asarray(e, dtype=float), axis=1) for e in exps]
    phi = np.column_stack(cols)
    return phi[0] if single else phi


def eval_poly_mean(coeffs, y, degree=None):
    """Evaluate the polynomial mean: component j is sum_r coeffs[j, r] y^r.

    ``coeffs`` is (D, M) in the enumeration order of ``enumerate_monomials``;
    the degree is inferred from M unless given.
    """
    coeffs = as_matrix(coeffs, "coeffs")
    y = np.asarray(y, dtype=float)
    L = y.shape[-1] if y.ndim else 1
    if degree is None:
        degree = _degree_from_basis(coeffs.shape[1], L)
    phi = monomial_features(y, degree)
    if phi.shape[-1] != coeffs.shape[1]:
        raise ShapeError(
            f"coefficient matrix has {coeffs.shape[1]} columns but the degree-"
            f"{degree} basis in {L} variables has {phi.shape[-1]} monomials"
        )
    return phi @ coeffs.T


def _degree_from_basis(m, y_dim):
    d = 0
    while n_monomials(d, y_dim) < m:
        d += 1
    if n_monomials(d, y_dim) != m:
        raise ShapeError(f"{m} columns is not a complete monomial basis in "
                         f"{y_dim} variables")
    return d


def model_dim(index, convention="full"):
    """Number of free parameters of the model at ``index``.

    full: (K-1) weights + K*L gating means + K*L(L+1)/2 gating covariances
    + K*D*M coefficients + per-cluster within-block covariance entries
    including diagonals. ``offdiag`` replaces the covariance term by the
    strictly off-diagonal within-block count (used for complexity
    reporting; it omits the D diagonal entries each cluster always has).
    """
    K, L, D = index.n_clusters, index.y_dim, index.x_dim
    m = index.n_basis
    base = (K - 1) + K * L + K * (L * (L + 1) // 2) + K * D * m
    cov = sum(cov_dim(b, convention) for b in index.blocks)
    return base + cov
