"""EM estimation of the mixture at a fixed model index.

The EM runs on the joint law of (y, x): gate marginal times expert
conditional. Its conditional in x given y is exactly the model density, so
improving the joint likelihood improves the conditional fit while keeping
every M-step in closed form. Parameter-space bounds are enforced by
projection after each M-step; iterations where a projection actually moved
a parameter are flagged because the usual monotonicity guarantee does not
cover them. The reported ``nll`` is always the conditional one, recomputed
from the returned model, and upper-bounds the constrained minimum (the
projections need not land on the constrained optimizer).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import KMeans

from .blocks import project_to_blocks
from .density import joint_component_logs, nll
from .errors import (ComponentCollapseError, FitFailureError,
                     InsufficientDataError)
from .model import (BlockMoeModel, Bounds, ExpertParams, GatingParams,
                    model_dim, monomial_features)
from .validation import clip_eigenvalues, project_simplex_floor

__all__ = ["FitConfig", "FitResult", "init_params", "e_step", "m_step", "fit"]

_COLLAPSE_FRAC = 1e-10   # column mass below this fraction of n = dead cluster


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 500
    rel_tol: float = 1e-8
    n_starts: int = 5
    seed: int = 0
    init_strategy: str = "kmeans"   # or "random_responsibilities"
    bounds: Bounds = field(default_factory=Bounds)

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.init_strategy not in ("kmeans", "random_responsibilities"):
            raise ValueError(f"unknown init strategy {self.init_strategy!r}")


@dataclass(frozen=True)
class FitResult:
    """Fitted model with its conditional NLL and convergence diagnostics.

    ``loglik_trace`` records the joint log-likelihood at every E-step of
    the winning start; ``flagged_iterations`` are the trace transitions
    whose M-step activated a bounds projection. ``eta`` is the achieved
    minimization slack rel_tol * |nll|.
    """

    model: BlockMoeModel
    nll: float
    dim: int
    loglik_trace: tuple
    converged: bool
    iterations: int
    start_index: int
    flagged_iterations: tuple = ()
    eta: float = 0.0


def e_step(model, data):
    """Responsibilities (n, K) and joint log-likelihood of the data."""
    logs = joint_component_logs(model, data.x, data.y)
    norm = logsumexp(logs, axis=1, keepdims=True)
    resp = np.exp(logs - norm)
    return resp, float(norm.sum())


def m_step(data, resp, index, bounds):
    """Weighted closed-form update, projected into the bounded space.

    Returns (model, clamped); ``clamped`` is True when any bound was
    active (weight floor, eigenvalue clips, or coefficient clipping).
    Raises ComponentCollapseError when a cluster's responsibility mass
    vanishes.
    """
    resp = np.asarray(resp, dtype=float)
    n, K = resp.shape
    if K != index.n_clusters:
        raise ValueError("responsibility columns do not match the index")
    col = resp.sum(axis=0)
    if np.any(col < _COLLAPSE_FRAC * n):
        dead = int(np.argmin(col))
        raise ComponentCollapseError(f"cluster {dead} collapsed (mass {col[dead]:.3e})")

    clamped = False
    weights, moved = project_simplex_floor(col / n, bounds.min_weight)
    clamped |= moved
    weights = weights / weights.sum()

    L, D = index.y_dim, index.x_dim
    phi = monomial_features(data.y, index.degree)            # (n, M)
    means = np.empty((K, L))
    gcovs = np.empty((K, L, L))
    coeffs = np.empty((K, D, phi.shape[1]))
    ecovs = np.empty((K, D, D))
    for k in range(K):
        r = resp[:, k]
        nk = col[k]
        means[k] = r @ data.y / nk
        yc = data.y - means[k]
        gcov = (yc * r[:, None]).T @ yc / nk
        gcov = 0.5 * (gcov + gcov.T)
        gcov, moved = clip_eigenvalues(gcov, bounds.gating_eig_min,
                                       bounds.gating_eig_max)
        clamped |= moved
        gcovs[k] = gcov

        # weighted least squares for the polynomial coefficients, with a
        # tiny trace-scaled ridge so degenerate designs stay solvable
        wphi = phi * r[:, None]
        gram = phi.T @ wphi
        ridge = 1e-10 * max(np.trace(gram) / gram.shape[0], 1e-30)
        gram = gram + ridge * np.eye(gram.shape[0])
        cross = data.x.T @ wphi                               # (D, M)
        alpha = np.linalg.solve(gram, cross.T).T
        alpha_c = np.clip(alpha, -bounds.max_coeff, bounds.max_coeff)
        if not np.array_equal(alpha_c, alpha):
            clamped = True
        coeffs[k] = alpha_c

        residual = data.x - phi @ alpha_c.T
        ecov = (residual * r[:, None]).T @ residual / nk
        ecov = project_to_blocks(0.5 * (ecov + ecov.T), index.blocks[k])
        ecov, moved = _clip_blockwise(ecov, index.blocks[k],
                                      bounds.expert_eig_min,
                                      bounds.expert_eig_max)
        clamped |= moved
        ecovs[k] = ecov

    model = BlockMoeModel(index, GatingParams(weights, means, gcovs),
                          ExpertParams(coeffs, ecovs), bounds)
    return model, clamped


def _clip_blockwise(cov, partition, lo, hi):
    """Eigenvalue clip applied block by block so off-block zeros stay exact."""
    out = cov.copy()
    moved = False
    for g in partition.groups:
        ix = np.ix_(g, g)
        blk, m = clip_eigenvalues(cov[ix], lo, hi)
        out[ix] = blk
        moved |= m
    return out, moved


def init_responsibilities(data, n_clusters, seed, strategy):
    """Initial soft assignments, from k-means labels or Dirichlet rows."""
    if data.n < n_clusters:
        raise InsufficientDataError(
            f"{data.n} observations cannot seed {n_clusters} clusters")
    if n_clusters == 1:
        return np.ones((data.n, 1))
    rng = np.random.default_rng(seed)
    if strategy == "kmeans":
        z = np.hstack([data.y, data.x])
        km_seed = int(rng.integers(0, 2**32 - 1))
        labels = KMeans(n_clusters=n_clusters, n_init=10,
                        random_state=km_seed).fit(z).labels_
        resp = np.zeros((data.n, n_clusters))
        resp[np.arange(data.n), labels] = 1.0
        return resp
    return rng.dirichlet(np.ones(n_clusters), size=data.n)


def init_params(data, index, seed, strategy="kmeans", bounds=None):
    """Initial bounded model: one projected M-step from initial assignments."""
    bounds = bounds if bounds is not None else Bounds()
    resp = init_responsibilities(data, index.n_clusters, seed, strategy)
    model, _ = m_step(data, resp, index, bounds)
    return model


def _run_em(data, model, index, config):
    trace = []
    flags = []
    converged = False
    prev = -np.inf
    for _ in range(config.max_iters):
        resp, loglik = e_step(model, data)
        trace.append(loglik)
        if np.isfinite(prev) and abs(loglik - prev) <= config.rel_tol * max(1.0, abs(loglik)):
            converged = True
            break
        prev = loglik
        model, clamped = m_step(data, resp, index, config.bounds)
        if clamped:
            flags.append(len(trace) - 1)
    return model, trace, flags, converged


def fit(data, index, config=None, warm_model=None):
    """Best-of-starts EM fit at a fixed model index.

    When ``warm_model`` is given, a single run is started from that
    model's responsibilities (its covariances get re-projected onto the
    target blocks through the first M-step); cold multi-start is the
    fallback if the warm run collapses. Deterministic given the config
    seed.
    """
    config = config if config is not None else FitConfig()
    config.bounds.validate_weight_count(index.n_clusters)

    runs = []
    if warm_model is not None:
        try:
            resp, _ = e_step(warm_model, data)
            model0, _ = m_step(data, resp, index, config.bounds)
            runs.append(_finish_run(data, model0, index, config, start_index=0))
        except ComponentCollapseError:
            runs = []
    if not runs:
        failures = []
        seeds = np.random.SeedSequence(config.seed).spawn(config.n_starts)
        for s, seed_s in enumerate(seeds):
            result = _cold_start(data, index, config, seed_s, s)
            if isinstance(result, FitResult):
                runs.append(result)
            else:
                failures.append(result)
        if not runs:
            raise FitFailureError(
                f"all {config.n_starts} starts collapsed for index "
                f"(K={index.n_clusters}, d={index.degree})", failures)
    best = max(runs, key=lambda r: (r.loglik_trace[-1], -r.start_index))
    return best


def _cold_start(data, index, config, seed_seq, start_index, max_retries=3):
    last = None
    for child in seed_seq.spawn(max_retries):
        seed = int(child.generate_state(1)[0])
        try:
            model0 = init_params(data, index, seed, config.init_strategy,
                                 config.bounds)
            return _finish_run(data, model0, index, config, start_index)
        except ComponentCollapseError as exc:
            last = f"start {start_index}: {exc}"
    return last


def _finish_run(data, model0, index, config, start_index):
    model, trace, flags, converged = _run_em(data, model0, index, config)
    cond_nll = nll(model, data)
    return FitResult(
        model=model,
        nll=cond_nll,
        dim=model_dim(index, "full"),
        loglik_trace=tuple(trace),
        converged=converged,
        iterations=len(trace),
        start_index=start_index,
        flagged_iterations=tuple(flags),
        eta=config.rel_tol * abs(cond_nll),
    )
