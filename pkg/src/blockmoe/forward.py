"""Closed-form parameter map from the fitted (inverse) model to the forward
conditional law of y given x, plus forward density evaluation and point
prediction.

With affine experts the pair (y, x) is a Gaussian mixture in both
factorization orders, so the inverse parameters determine forward ones in
closed form; this is what makes high-dimensional prediction cheap."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .density import _component_log_gauss, gaussian_logpdf
from .errors import ShapeError, UnsupportedDegreeError
from .model import _freeze
from .validation import chol_lower, spd_solve

__all__ = ["ForwardParams", "inverse_to_forward", "log_forward_cond_density",
           "predict_mean"]


@dataclass(frozen=True)
class ForwardParams:
    """Parameters of the forward conditional density of y given x.

    Gates are Gaussian in x (means ``x_means``, covariances ``x_covs``)
    and each component emits y from N(slope @ x + intercept, noise).
    """

    weights: np.ndarray      # (K,)
    x_means: np.ndarray      # (K, D)
    x_covs: np.ndarray       # (K, D, D)
    slopes: np.ndarray       # (K, L, D)
    intercepts: np.ndarray   # (K, L)
    noises: np.ndarray       # (K, L, L)

    def __post_init__(self):
        for name in ("weights", "x_means", "x_covs", "slopes", "intercepts",
                     "noises"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        k = self.weights.shape[0]
        d = self.x_means.shape[1]
        L = self.intercepts.shape[1]
        if self.x_covs.shape != (k, d, d) or self.slopes.shape != (k, L, d) \
                or self.noises.shape != (k, L, L):
            raise ShapeError("forward parameter shapes are inconsistent")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ShapeError("forward weights must sum to 1")

    @property
    def n_clusters(self):
        return self.weights.shape[0]

    @property
    def x_dim(self):
        return self.x_means.shape[1]

    @property
    def y_dim(self):
        return self.intercepts.shape[1]


def _affine_parts(model):
    """Split degree-1 coefficient matrices into intercepts b (D,) and
    slopes A (D, L); the basis is ordered intercept first, coordinates next."""
    if model.index.degree != 1:
        raise UnsupportedDegreeError(
            "forward parameters exist for affine experts only (degree 1)"
        )
    coeffs = model.experts.coeffs
    return coeffs[:, :, 0], coeffs[:, :, 1:]


def inverse_to_forward(model):
    """Map fitted inverse parameters to the forward conditional law.

    Per cluster, with inverse gate (c, Gamma) over y, expert x | y ~
    N(A y + b, Sigma):

        x marginal mean      = A c + b
        x marginal cov       = Sigma + A Gamma A^T
        noise                = (Gamma^-1 + A^T Sigma^-1 A)^-1
        slope                = noise A^T Sigma^-1
        intercept            = noise (Gamma^-1 c - A^T Sigma^-1 b)

    computed with Cholesky solves in exactly this information form.
    """
    b_all, a_all = _affine_parts(model)
    K, D, L = model.n_clusters, model.x_dim, model.y_dim
    x_means = np.empty((K, D))
    x_covs = np.empty((K, D, D))
    slopes = np.empty((K, L, D))
    intercepts = np.empty((K, L))
    noises = np.empty((K, L, L))
    eye_l = np.eye(L)
    for k in range(K):
        a = a_all[k]                       # (D, L)
        b = b_all[k]                       # (D,)
        c = model.gating.means[k]          # (L,)
        gamma = model.gating.covs[k]
        sigma = model.experts.covs[k]
        chol_sigma = chol_lower(sigma, "expert covariance")
        chol_gamma = chol_lower(gamma, "gating covariance")
        sigma_inv_a = spd_solve(chol_sigma, a)            # Sigma^-1 A, (D, L)
        gamma_inv = spd_solve(chol_gamma, eye_l)
        info = gamma_inv + a.T @ sigma_inv_a              # (L, L)
        chol_info = chol_lower(0.5 * (info + info.T), "forward noise precision")
        noise = spd_solve(chol_info, eye_l)
        noise = 0.5 * (noise + noise.T)
        x_means[k] = a @ c + b
        x_covs[k] = sigma + a @ gamma @ a.T
        noises[k] = noise
        slopes[k] = noise @ sigma_inv_a.T
        intercepts[k] = noise @ (spd_solve(chol_gamma, c) - sigma_inv_a.T @ b)
    return ForwardParams(model.gating.weights.copy(), x_means, x_covs,
                         slopes, intercepts, noises)


def _forward_log_gates(fwd, x_rows):
    lw = np.log(fwd.weights)[None, :] + _component_log_gauss(
        x_rows, fwd.x_means, fwd.x_covs)
    return lw - logsumexp(lw, axis=1, keepdims=True)


def log_forward_cond_density(fwd, y, x):
    """log p(y | x) under the forward mixture, log-sum-exp stabilized."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xr = np.atleast_2d(x)
    yr = np.atleast_2d(y)
    if xr.shape[0] != yr.shape[0]:
        raise ShapeError("x and y must pair up row by row")
    lg = _forward_log_gates(fwd, xr)
    le = np.empty_like(lg)
    for k in range(fwd.n_clusters):
        mean_k = xr @ fwd.slopes[k].T + fwd.intercepts[k]
        le[:, k] = gaussian_logpdf(yr, mean_k, fwd.noises[k])
    out = logsumexp(lg + le, axis=1)
    return float(out[0]) if single else out


def predict_mean(fwd, x):
    """Posterior mean of y given x: gate-weighted affine predictions."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xr = np.atleast_2d(x)
    gates = np.exp(_forward_log_gates(fwd, xr))          # (n, K)
    comp = np.stack([xr @ fwd.slopes[k].T + fwd.intercepts[k]
                     for k in range(fwd.n_clusters)], axis=1)   # (n, K, L)
    out = np.sum(gates[:, :, None] * comp, axis=1)
    return out[0] if single else out
