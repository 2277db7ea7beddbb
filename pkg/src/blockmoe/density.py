"""Numerically stable density evaluation for the mixture.

Everything is computed in log space with log-sum-exp; Gaussian terms use
Cholesky factorizations with hard failure on non-SPD covariances.
"""

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import ShapeError, UnsupportedDegreeError
from .model import eval_poly_mean
from .validation import chol_lower, chol_logdet

__all__ = [
    "gaussian_logpdf",
    "log_gating",
    "log_cond_density",
    "log_joint_density",
    "nll",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def gaussian_logpdf(x, mean, cov):
    """log N(x; mean, cov) for x of shape (D,) or (n, D).

    ``mean`` may be a single vector or one row per observation.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    centered = pts - (mean if mean.ndim == 1 else np.atleast_2d(mean))
    d = centered.shape[1]
    chol = chol_lower(np.asarray(cov, dtype=float))
    z = solve_triangular(chol, centered.T, lower=True)
    quad = np.sum(z * z, axis=0)
    out = -0.5 * (d * _LOG_2PI + chol_logdet(chol) + quad)
    return float(out[0]) if single else out


def _component_log_gauss(points, means, covs):
    """Per-cluster Gaussian log densities: (n, K) for points (n, D).

    ``means`` is (K, D) or (K, n, D) when the mean varies per observation.
    """
    n = points.shape[0]
    k = covs.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        mean_j = means[j]
        out[:, j] = gaussian_logpdf(points, mean_j, covs[j])
    return out


def log_gating(gating, y):
    """Log gate probabilities at y: shape (K,) for one point, (n, K) for rows.

    Computed as a log-sum-exp normalization of log pi_k + log N(y; c_k,
    Gamma_k); the exponentials sum to one by construction.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    rows = np.atleast_2d(y)
    lw = _gating_joint_logs(gating, rows)
    out = lw - logsumexp(lw, axis=1, keepdims=True)
    return out[0] if single else out


def _gating_joint_logs(gating, rows):
    """log pi_k + log N(y_i; c_k, Gamma_k), shape (n, K)."""
    lp = np.log(gating.weights)
    return lp[None, :] + _component_log_gauss(rows, gating.means, gating.covs)


def _expert_log_gauss(model, x_rows, y_rows):
    """log N(x_i; poly_mean_k(y_i), Sigma_k), shape (n, K)."""
    n = x_rows.shape[0]
    k = model.n_clusters
    out = np.empty((n, k))
    for j in range(k):
        mean_j = eval_poly_mean(model.experts.coeffs[j], y_rows,
                                degree=model.index.degree)
        out[:, j] = gaussian_logpdf(x_rows, mean_j, model.experts.covs[j])
    return out


def _check_pair(model, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != y.ndim:
        raise ShapeError("x and y must both be single points or both row arrays")
    single = x.ndim == 1
    xr = np.atleast_2d(x)
    yr = np.atleast_2d(y)
    if xr.shape[0] != yr.shape[0]:
        raise ShapeError("x and y must pair up row by row")
    if xr.shape[1] != model.x_dim or yr.shape[1] != model.y_dim:
        raise ShapeError(
            f"expected x of dim {model.x_dim} and y of dim {model.y_dim}, "
            f"got {xr.shape[1]} and {yr.shape[1]}"
        )
    return xr, yr, single


def log_cond_density(model, x, y):
    """log of the conditional density of x given y under the mixture.

    Accepts single points (x (D,), y (L,)) or paired rows (x (n, D),
    y (n, L)); returns a scalar or an (n,) array accordingly.
    """
    xr, yr, single = _check_pair(model, x, y)
    lg = log_gating(model.gating, yr)
    le = _expert_log_gauss(model, xr, yr)
    out = logsumexp(lg + le, axis=1)
    return float(out[0]) if single else out


def joint_component_logs(model, x_rows, y_rows):
    """log pi_k + log N(y_i) + log N(x_i | y_i, k), shape (n, K).

    Valid for any degree; the gating marginal times the expert conditional
    is a proper joint density over (x, y).
    """
    lw = _gating_joint_logs(model.gating, y_rows)
    le = _expert_log_gauss(model, x_rows, y_rows)
    return lw + le


def log_joint_density(model, x, y):
    """log of the joint density of (x, y) for affine experts (degree <= 1).

    The joint-Gaussian factorization backing the forward parameter map
    only exists in the affine case, so higher degrees are rejected here
    even though the component sum itself would still normalize.
    """
    if model.index.degree > 1:
        raise UnsupportedDegreeError(
            "joint density is exposed for affine experts only (degree <= 1)"
        )
    xr, yr, single = _check_pair(model, x, y)
    out = logsumexp(joint_component_logs(model, xr, yr), axis=1)
    return float(out[0]) if single else out


def nll(model, data):
    """Negative conditional log-likelihood, summed over the dataset."""
    return -float(np.sum(log_cond_density(model, data.x, data.y)))
