"""Model collection construction and penalized selection.

The collection is indexed by (number of clusters, polynomial degree, block
structure); block structures come from thresholded-correlation candidates
detected on per-cluster residual covariances of a full-covariance base fit.
Each candidate model is scored by its conditional NLL plus kappa times the
penalty shape dim * (1 + ln n). The multiplicative constant kappa absorbs
every unknown constant of the underlying risk bound and is calibrated from
the data by the slope heuristic: among the most complex models the NLL
decreases linearly in the penalty shape, and the magnitude of that slope
estimates the minimal constant; twice it is the recommended working value.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import theilslopes

from .blocks import detect_candidates
from .em import FitConfig, fit
from .errors import FitFailureError, InsufficientDataError
from .model import ModelIndex, model_dim

__all__ = [
    "DetectionConfig",
    "SelectionRow",
    "SelectionTable",
    "SelectionResult",
    "pen_shape",
    "build_collection",
    "fit_collection",
    "slope_heuristic",
    "select",
    "run_selection",
    "complexity_bound",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectionConfig:
    threshold_count: int = 8
    max_structures: int = 20
    combine: str = "matched"


@dataclass(frozen=True)
class SelectionRow:
    index: ModelIndex
    nll: float
    dim: int
    pen_shape: float
    converged: bool
    iterations: int = 0


@dataclass(frozen=True)
class SelectionTable:
    """Per-model scores over the fitted collection, at sample size n."""

    rows: tuple
    n: int

    def __post_init__(self):
        for row in self.rows:
            expected = row.dim * (1.0 + math.log(self.n))
            if not math.isclose(row.pen_shape, expected, rel_tol=1e-12):
                raise ValueError("pen_shape must equal dim * (1 + ln n)")

    def __len__(self):
        return len(self.rows)

    def nlls(self):
        return np.array([r.nll for r in self.rows])

    def pen_shapes(self):
        return np.array([r.pen_shape for r in self.rows])

    def dims(self):
        return np.array([r.dim for r in self.rows])

    def aic(self):
        """Reference criterion column: 2 nll + 2 dim."""
        return 2.0 * self.nlls() + 2.0 * self.dims()

    def bic(self):
        """Reference criterion column: 2 nll + dim ln n."""
        return 2.0 * self.nlls() + self.dims() * math.log(self.n)


@dataclass(frozen=True)
class SelectionResult:
    selected: ModelIndex
    kappa_hat: float
    kappa_used: float
    method: str
    table: SelectionTable


def pen_shape(index, n):
    """Penalty shape dim * (1 + ln n) under the full dimension convention.

    Only the shape matters: the multiplicative calibration constant and
    the additive per-model weights of the risk bound are absorbed into
    kappa, which the slope heuristic estimates from data.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    return model_dim(index, "full") * (1.0 + math.log(n))


def _index_entropy(index):
    flat = [index.n_clusters, index.degree, index.y_dim]
    for b in index.blocks:
        for g in b.groups:
            flat.extend((len(g), *g))
    return tuple(flat)


def _derived_config(config, entropy):
    if isinstance(entropy, int):
        entropy = (entropy,)
    seed = int(np.random.SeedSequence((config.seed, *entropy)).generate_state(1)[0])
    return FitConfig(max_iters=config.max_iters, rel_tol=config.rel_tol,
                     n_starts=config.n_starts, seed=seed,
                     init_strategy=config.init_strategy, bounds=config.bounds)


def build_collection(data, K_max, d_max, det_config=None, fit_config=None):
    """Candidate indices plus the full-covariance base fits they grew from.

    For each cluster count a full-block affine model is fitted; its
    per-cluster residual covariances feed the block-structure detector,
    and every (degree, structure) combination is emitted. Returns
    (indices, base_fits) where base_fits maps cluster count to FitResult.
    Cluster counts whose base fit fails are skipped with a warning.
    """
    if K_max < 1 or d_max < 1:
        raise ValueError("K_max and d_max must be >= 1")
    det_config = det_config if det_config is not None else DetectionConfig()
    fit_config = fit_config if fit_config is not None else FitConfig()
    indices = []
    base_fits = {}
    for K in range(1, K_max + 1):
        base_index = ModelIndex.full(K, 1, data.x_dim, data.y_dim)
        try:
            base = fit(data, base_index, _derived_config(fit_config, K))
        except (FitFailureError, InsufficientDataError) as exc:
            logger.warning("base fit failed for %d clusters: %s", K, exc)
            continue
        base_fits[K] = base
        structures = detect_candidates(base.model.experts.covs,
                                       det_config.threshold_count,
                                       det_config.max_structures,
                                       det_config.combine)
        for d in range(1, d_max + 1):
            for struct in structures:
                indices.append(ModelIndex(K, d, struct, data.y_dim))
    indices.sort(key=ModelIndex.sort_key)
    return indices, base_fits


def fit_collection(data, indices, base_fits, fit_config=None):
    """Fit every index, warm-starting from its cluster count's base fit.

    The base fit itself is reused for its own index instead of refitting.
    Indices whose fit fails are dropped with a warning.
    """
    fit_config = fit_config if fit_config is not None else FitConfig()
    rows = []
    results = {}
    for index in indices:
        base = base_fits.get(index.n_clusters)
        if base is not None and index == base.model.index:
            res = base
        else:
            warm = base.model if base is not None else None
            try:
                res = fit(data, index,
                          _derived_config(fit_config, _index_entropy(index)),
                          warm_model=warm)
            except (FitFailureError, InsufficientDataError) as exc:
                logger.warning("fit failed for %s: %s", index, exc)
                continue
        results[index] = res
        rows.append(SelectionRow(index=index, nll=res.nll, dim=res.dim,
                                 pen_shape=res.dim * (1.0 + math.log(data.n)),
                                 converged=res.converged,
                                 iterations=res.iterations))
    return SelectionTable(tuple(rows), data.n), results


def slope_heuristic(table, method="slope_fit", fraction=0.5, grid_size=41):
    """Estimate the penalty constant kappa from the fitted table.

    slope_fit: Theil-Sen regression of NLL on penalty shape over the
    ``fraction`` of rows with the largest penalty shapes; the negated
    slope (floored at 1e-12) is the estimate, and 2x it is the
    recommended working constant. dimension_jump: scan kappa on a log
    grid and return the kappa at the largest drop of the selected
    dimension.
    """
    ps = table.pen_shapes()
    if len(set(ps.tolist())) < 3:
        raise InsufficientDataError(
            "slope calibration needs at least 3 distinct penalty shapes")
    if method == "slope_fit":
        order = np.argsort(ps)[::-1]
        m = max(2, math.ceil(fraction * len(ps)))
        window = order[:m]
        while len(set(ps[window].tolist())) < 2 and m < len(ps):
            m += 1
            window = order[:m]
        slope = theilslopes(table.nlls()[window], ps[window]).slope
        return max(-float(slope), 1e-12)
    if method == "dimension_jump":
        return _dimension_jump(table, grid_size)
    raise ValueError(f"unknown slope heuristic method {method!r}")


def _dimension_jump(table, grid_size):
    ps = table.pen_shapes()
    nlls = table.nlls()
    spread_nll = float(np.max(nlls) - np.min(nlls))
    spread_ps = float(np.max(ps) - np.min(ps))
    scale = spread_nll / spread_ps if spread_nll > 0 and spread_ps > 0 else 1.0
    grid = scale * np.logspace(-3, 3, grid_size)
    dims = np.array([_argmin_row(table, kappa).dim for kappa in grid])
    drops = dims[:-1] - dims[1:]
    if np.all(drops <= 0):
        return 1e-12
    j = int(np.argmax(drops))
    return float(grid[j + 1])


def _argmin_row(table, kappa_used):
    crit = table.nlls() + kappa_used * table.pen_shapes()
    best = np.min(crit)
    tied = [r for r, c in zip(table.rows, crit) if c == best]
    return min(tied, key=lambda r: (r.dim,) + r.index.sort_key())


def select(table, kappa_used, kappa_hat=None, method="fixed"):
    """Penalized choice: argmin of nll + kappa_used * pen_shape.

    Ties break toward the smaller dimension, then lexicographically in
    (cluster count, degree, canonical blocks).
    """
    if len(table) == 0:
        raise ValueError("selection table is empty")
    row = _argmin_row(table, kappa_used)
    return SelectionResult(selected=row.index,
                           kappa_hat=kappa_used / 2.0 if kappa_hat is None else kappa_hat,
                           kappa_used=kappa_used, method=method, table=table)


def run_selection(data, K_max, d_max, det_config=None, fit_config=None,
                  method="slope_fit", fraction=0.5, kappa=None):
    """Full pipeline: build collection, fit it, calibrate kappa, select.

    Returns (SelectionResult, fit results dict). ``kappa`` overrides the
    calibration when given (method becomes "fixed").
    """
    indices, base_fits = build_collection(data, K_max, d_max, det_config,
                                          fit_config)
    table, results = fit_collection(data, indices, base_fits, fit_config)
    if len(table) == 0:
        raise FitFailureError("every candidate fit failed; empty collection")
    if kappa is not None:
        return select(table, kappa, kappa_hat=kappa, method="fixed"), results
    kappa_hat = slope_heuristic(table, method=method, fraction=fraction)
    return select(table, 2.0 * kappa_hat, kappa_hat=kappa_hat,
                  method=method), results


def complexity_bound(dim, c_model, n):
    """Reporting utility: the complexity bound behind the penalty shape.

    Returns (bound, cap) with b = (sqrt(c_model) + sqrt(pi))^2,
    bound = dim * (2 b + max(0, ln(n / (b dim)))) and the simplified cap
    dim * (2 b + ln n) that the penalty shape mirrors.
    """
    if dim < 1 or c_model <= 0 or n < 1:
        raise ValueError("need dim >= 1, c_model > 0, n >= 1")
    b = (math.sqrt(c_model) + math.sqrt(math.pi)) ** 2
    bound = dim * (2.0 * b + max(0.0, math.log(n / (b * dim))))
    cap = dim * (2.0 * b + math.log(n))
    return bound, cap
