"""Losses between conditional densities: exact Gaussian formulas and
tensorized Monte-Carlo estimators.

The tensorized losses average a per-design-point divergence over a set of
covariate values. Three estimators share one random stream per design
point (seeded by the design's bytes), so the chain

    c_rho * hellinger^2 <= jensen_kl <= kl

holds pathwise up to estimator noise, and estimates over concatenated
design sets are exact averages of the per-set estimates. Jensen-KL
replaces the second argument of KL by the mixture (1-rho) s0 + rho t,
which keeps every draw finite and caps the loss at (1/rho) ln(1/(1-rho)).
"""

import math
from dataclasses import dataclass

import numpy as np

from .density import gaussian_logpdf, log_cond_density, log_gating
from .errors import PreconditionError
from .model import eval_poly_mean
from .validation import chol_lower, chol_logdet, spd_solve

__all__ = [
    "DivergenceEstimate",
    "PairedDivergences",
    "MixtureConditional",
    "c_rho",
    "jkl_upper_bound",
    "hellinger_gaussian_exact",
    "kl_gaussian_exact",
    "gaussian_ratio_bound",
    "mc_kl_tensorized",
    "mc_jkl_tensorized",
    "mc_hellinger_tensorized",
    "mc_divergence_suite",
]


@dataclass(frozen=True)
class DivergenceEstimate:
    """Monte-Carlo estimate with its standard error.

    ``value`` may be clipped into the loss's natural range (Hellinger);
    ``raw_value`` always keeps the unclipped estimate. ``n_nonfinite``
    counts draws whose log ratio was not finite (absolute-continuity
    failure); any such draw makes a KL estimate +inf.
    """

    value: float
    std_error: float
    n_samples: int
    rho: float = None
    raw_value: float = None
    n_nonfinite: int = 0

    def __post_init__(self):
        if self.raw_value is None:
            object.__setattr__(self, "raw_value", self.value)


@dataclass(frozen=True)
class PairedDivergences:
    kl: DivergenceEstimate
    jkl: DivergenceEstimate
    hellinger: DivergenceEstimate


def c_rho(rho):
    """Constant linking tensorized squared Hellinger and Jensen-KL:
    (1/rho) min((1-rho)/rho, 1) (ln(1 + rho/(1-rho)) - rho)."""
    _check_rho(rho)
    return (1.0 / rho) * min((1.0 - rho) / rho, 1.0) * (
        math.log1p(rho / (1.0 - rho)) - rho)


def jkl_upper_bound(rho):
    """Hard cap of the Jensen-KL loss: (1/rho) ln(1/(1-rho))."""
    _check_rho(rho)
    return -math.log1p(-rho) / rho


def _check_rho(rho):
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")


def hellinger_gaussian_exact(mu1, cov1, mu2, cov2):
    """Squared Hellinger distance between two Gaussians, in [0, 2]:

    2 { 1 - 2^{D/2} |S1 S2|^{-1/4} |S1^-1 + S2^-1|^{-1/2}
          exp[-1/4 (m1-m2)^T (S1+S2)^-1 (m1-m2)] }
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    d = mu1.size
    c1 = chol_lower(np.asarray(cov1, dtype=float), "cov1")
    c2 = chol_lower(np.asarray(cov2, dtype=float), "cov2")
    inv1 = spd_solve(c1, np.eye(d))
    inv2 = spd_solve(c2, np.eye(d))
    csum = chol_lower(np.asarray(cov1) + np.asarray(cov2), "cov1 + cov2")
    cinv = chol_lower(0.5 * (inv1 + inv2 + inv1.T + inv2.T),
                      "precision sum")
    delta = mu1 - mu2
    quad = float(delta @ spd_solve(csum, delta))
    log_coef = (0.5 * d * math.log(2.0)
                - 0.25 * (chol_logdet(c1) + chol_logdet(c2))
                - 0.5 * chol_logdet(cinv)
                - 0.25 * quad)
    return 2.0 * (1.0 - math.exp(log_coef))


def kl_gaussian_exact(mu1, cov1, mu2, cov2):
    """KL(N1 || N2) in closed form; used as a test oracle for the
    Monte-Carlo estimators."""
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    d = mu1.size
    c1 = chol_lower(np.asarray(cov1, dtype=float), "cov1")
    c2 = chol_lower(np.asarray(cov2, dtype=float), "cov2")
    delta = mu2 - mu1
    trace = float(np.trace(spd_solve(c2, np.asarray(cov1, dtype=float))))
    quad = float(delta @ spd_solve(c2, delta))
    return 0.5 * (trace - d + quad + chol_logdet(c2) - chol_logdet(c1))


def gaussian_ratio_bound(mu1, cov1, mu2, cov2, x):
    """Pointwise Gaussian density ratio and its uniform bound.

    Requires cov2 - cov1 positive definite; then for every x,
    N(x; mu1, cov1) / N(x; mu2, cov2)
        <= sqrt(|cov2| / |cov1|) exp[1/2 (mu1-mu2)^T (cov2-cov1)^-1 (mu1-mu2)].
    Returns (ratio_at_x, bound).
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    cov1 = np.asarray(cov1, dtype=float)
    cov2 = np.asarray(cov2, dtype=float)
    c1 = chol_lower(cov1, "cov1")
    c2 = chol_lower(cov2, "cov2")
    try:
        cdiff = chol_lower(cov2 - cov1, "cov2 - cov1")
    except Exception as exc:
        raise PreconditionError(
            "cov2 - cov1 must be positive definite for the ratio bound") from exc
    delta = mu1 - mu2
    bound = math.exp(0.5 * (chol_logdet(c2) - chol_logdet(c1))
                     + 0.5 * float(delta @ spd_solve(cdiff, delta)))
    ratio = math.exp(gaussian_logpdf(np.asarray(x, dtype=float), mu1, cov1)
                     - gaussian_logpdf(np.asarray(x, dtype=float), mu2, cov2))
    return ratio, bound


class MixtureConditional:
    """Sampler/evaluator adapter for a fitted or true mixture model.

    Provides ``log_density(x_rows, y)`` and ``sample(y, size, rng)`` for a
    fixed covariate value y, which is the protocol the Monte-Carlo
    estimators expect.
    """

    def __init__(self, model):
        self.model = model
        self._chols = [chol_lower(model.experts.covs[k], f"expert covariance {k}")
                       for k in range(model.n_clusters)]

    def log_density(self, x_rows, y):
        x_rows = np.atleast_2d(np.asarray(x_rows, dtype=float))
        y_rows = np.broadcast_to(np.asarray(y, dtype=float),
                                 (x_rows.shape[0], self.model.y_dim))
        return log_cond_density(self.model, x_rows, np.ascontiguousarray(y_rows))

    def sample(self, y, size, rng):
        model = self.model
        gates = np.exp(log_gating(model.gating, np.asarray(y, dtype=float)))
        comps = rng.choice(model.n_clusters, size=size, p=gates)
        noise = rng.standard_normal((size, model.x_dim))
        out = np.empty((size, model.x_dim))
        for k in range(model.n_clusters):
            mask = comps == k
            if not np.any(mask):
                continue
            mean = eval_poly_mean(model.experts.coeffs[k], np.asarray(y, dtype=float),
                                  degree=model.index.degree)
            out[mask] = mean + noise[mask] @ self._chols[k].T
        return out


def _design_rng(seed, y):
    y = np.ascontiguousarray(np.asarray(y, dtype=float))
    words = np.frombuffer(y.tobytes(), dtype=np.uint32)
    return np.random.default_rng(
        np.random.SeedSequence([int(seed)] + [int(w) for w in words]))


def _per_design_draws(s0, t, designs, n_samples, seed):
    """Log densities of shared draws under both conditionals, per design."""
    if n_samples < 2:
        raise ValueError("need at least 2 samples per design point")
    designs = np.atleast_2d(np.asarray(designs, dtype=float))
    for y in designs:
        rng = _design_rng(seed, y)
        draws = s0.sample(y, n_samples, rng)
        ls0 = np.asarray(s0.log_density(draws, y), dtype=float)
        lt = np.asarray(t.log_density(draws, y), dtype=float)
        yield ls0, lt


def _reduce(per_design_values):
    """Mean of per-design means and the induced standard error."""
    means = np.array([np.mean(v) for v in per_design_values])
    vars_ = np.array([np.var(v, ddof=1) / len(v) for v in per_design_values])
    n_designs = len(means)
    value = float(np.mean(means))
    std_error = float(np.sqrt(np.sum(vars_)) / n_designs)
    return value, std_error


def mc_divergence_suite(s0, t, designs, rho, n_samples, seed):
    """KL, Jensen-KL and squared-Hellinger estimates from shared draws."""
    _check_rho(rho)
    kl_vals, jkl_vals, root_ratios = [], [], []
    n_nonfinite = 0
    log1m = math.log1p(-rho)
    logr = math.log(rho)
    for ls0, lt in _per_design_draws(s0, t, designs, n_samples, seed):
        diff = ls0 - lt
        n_nonfinite += int(np.sum(~np.isfinite(diff)))
        kl_vals.append(diff)
        lmix = np.logaddexp(log1m + ls0, logr + lt)
        jkl_vals.append((ls0 - lmix) / rho)
        root_ratios.append(np.exp(np.clip(0.5 * (lt - ls0), None, 700.0)))
    total = sum(len(v) for v in kl_vals)

    if n_nonfinite > 0:
        kl = DivergenceEstimate(math.inf, math.inf, total,
                                n_nonfinite=n_nonfinite)
    else:
        value, se = _reduce(kl_vals)
        kl = DivergenceEstimate(value, se, total)

    value, se = _reduce(jkl_vals)
    jkl = DivergenceEstimate(value, se, total, rho=rho)

    # squared Hellinger per design is 2 - 2 * mean of sqrt density ratios
    value, se = _reduce(root_ratios)
    raw = 2.0 - 2.0 * value
    hel = DivergenceEstimate(min(max(raw, 0.0), 2.0), 2.0 * se, total,
                             raw_value=raw)
    return PairedDivergences(kl, jkl, hel)


def mc_kl_tensorized(s0, t, designs, n_samples, seed):
    """Tensorized KL estimate: per design, the mean log ratio over draws
    from s0, averaged across designs. +inf with a nonfinite count when the
    ratio diverges on any draw."""
    return mc_divergence_suite(s0, t, designs, 0.5, n_samples, seed).kl


def mc_jkl_tensorized(s0, t, designs, rho, n_samples, seed):
    """Tensorized Jensen-KL estimate; always finite and capped (up to
    noise) by ``jkl_upper_bound(rho)``."""
    return mc_divergence_suite(s0, t, designs, rho, n_samples, seed).jkl


def mc_hellinger_tensorized(s0, t, designs, n_samples, seed):
    """Tensorized squared-Hellinger estimate, clipped into [0, 2] with the
    raw value retained."""
    return mc_divergence_suite(s0, t, designs, 0.5, n_samples, seed).hellinger
