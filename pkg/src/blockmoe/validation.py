"""Input-validation and small numeric helpers used throughout the package."""

import numpy as np
from scipy.linalg import cholesky, solve_triangular, LinAlgError

from .errors import DecompositionError, ShapeError

__all__ = [
    "as_matrix",
    "as_vector",
    "check_symmetric",
    "chol_lower",
    "chol_logdet",
    "spd_solve",
    "is_spd",
    "clip_eigenvalues",
    "project_simplex_floor",
]


def as_matrix(a, name="array"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {a.shape}")
    return a


def as_vector(a, name="array"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {a.shape}")
    return a


def check_symmetric(a, tol=1e-10, name="matrix"):
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {a.shape}")
    dev = np.max(np.abs(a - a.T)) if a.size else 0.0
    if dev > tol * max(1.0, np.max(np.abs(a))):
        raise ShapeError(f"{name} is not symmetric (max deviation {dev:.3e})")
    return a


def chol_lower(cov, name="covariance"):
    """Lower Cholesky factor; DecompositionError when the input is not SPD."""
    try:
        return cholesky(cov, lower=True)
    except (LinAlgError, np.linalg.LinAlgError, ValueError) as exc:
        raise DecompositionError(f"{name} is not positive definite") from exc


def chol_logdet(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def spd_solve(chol, b):
    """Solve A x = b given the lower Cholesky factor of A."""
    y = solve_triangular(chol, b, lower=True)
    return solve_triangular(chol.T, y, lower=False)


def is_spd(a, tol=1e-10):
    try:
        check_symmetric(a, tol=tol)
        chol_lower(a)
        return True
    except (ShapeError, DecompositionError):
        return False


def clip_eigenvalues(a, lo, hi, rtol=1e-12):
    """Project a symmetric matrix onto {lo <= eigenvalues <= hi}.

    Returns (matrix, changed). The input is returned untouched when no
    eigenvalue needs clipping, so repeated application is bitwise stable.
    """
    sym = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(sym)
    w_clipped = np.clip(w, lo, hi)
    scale = np.maximum(1.0, np.abs(w))
    if np.all(np.abs(w_clipped - w) <= rtol * scale):
        return a, False
    return (v * w_clipped) @ v.T, True


def project_simplex_floor(p, floor):
    """Project a probability vector onto {q : q_k >= floor, sum q = 1}.

    Euclidean projection; returns (vector, changed) and leaves feasible
    inputs untouched.
    """
    p = np.asarray(p, dtype=float)
    k = p.size
    if floor * k > 1.0 + 1e-15:
        raise ValueError(f"floor {floor} infeasible for {k} components")
    if np.all(p >= floor - 1e-15):
        return p, False
    free = 1.0 - floor * k
    if free <= 0.0:
        return np.full(k, 1.0 / k), True
    # shift to the unconstrained simplex, project, shift back
    u = (p - floor) / free
    srt = np.sort(u)[::-1]
    css = np.cumsum(srt) - 1.0
    idx = np.arange(1, k + 1)
    cond = srt - css / idx > 0
    rho = idx[cond][-1]
    theta = css[cond][-1] / rho
    q = np.maximum(u - theta, 0.0)
    return floor + free * q, True
