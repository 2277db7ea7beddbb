"""Scikit-learn style estimators wrapping the functional core.

``X`` is the high-dimensional predictor (the mixture's response
coordinate) and ``y`` the low-dimensional bounded target; training fits
the model of X given y and prediction inverts it through the closed-form
forward map, so both estimators compose with sklearn pipelines,
cross-validation, and cloning.
"""

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .blocks import BlockPartition
from .density import log_cond_density
from .em import FitConfig, fit
from .forward import inverse_to_forward, predict_mean
from .model import Bounds, Dataset, ModelIndex
from .selection import DetectionConfig, run_selection

__all__ = ["BlockMoeRegressor", "BlockMoeSelector"]


def _validated_pair(X, y, rescale):
    X = check_array(X, ensure_2d=True, dtype=float)
    y = check_array(y, ensure_2d=False, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return Dataset.from_arrays(X, y, rescale=rescale)


def _blocks_param(blocks, n_clusters, x_dim):
    if blocks == "full":
        return tuple(BlockPartition.one_block(x_dim) for _ in range(n_clusters))
    if blocks == "singletons":
        return tuple(BlockPartition.singletons(x_dim) for _ in range(n_clusters))
    if blocks and isinstance(blocks[0][0], (list, tuple)):
        return tuple(BlockPartition(b) for b in blocks)
    part = BlockPartition(blocks)
    return tuple(part for _ in range(n_clusters))


class BlockMoeRegressor(RegressorMixin, BaseEstimator):
    """Mixture-of-experts regressor at a fixed model index.

    Parameters
    ----------
    n_components : number of mixture clusters.
    degree : polynomial degree of the expert means; prediction requires 1.
    blocks : "full", "singletons", one 0-based partition of the X columns,
        or one partition per cluster.
    max_iter, tol, n_starts, init : EM settings.
    bounds : optional Bounds instance restricting the parameter space.
    y_rescale : how to handle targets outside [0, 1] ("warn", "affine",
        "error", "ignore").
    random_state : integer seed; fitting is deterministic given it.
    """

    def __init__(self, n_components=1, degree=1, blocks="full", max_iter=500,
                 tol=1e-8, n_starts=5, init="kmeans", bounds=None,
                 y_rescale="warn", random_state=0):
        self.n_components = n_components
        self.degree = degree
        self.blocks = blocks
        self.max_iter = max_iter
        self.tol = tol
        self.n_starts = n_starts
        self.init = init
        self.bounds = bounds
        self.y_rescale = y_rescale
        self.random_state = random_state

    def _config(self):
        return FitConfig(max_iters=self.max_iter, rel_tol=self.tol,
                         n_starts=self.n_starts, seed=int(self.random_state),
                         init_strategy=self.init,
                         bounds=self.bounds if self.bounds is not None else Bounds())

    def fit(self, X, y):
        data = _validated_pair(X, y, self.y_rescale)
        index = ModelIndex(self.n_components, self.degree,
                           _blocks_param(self.blocks, self.n_components,
                                         data.x_dim), data.y_dim)
        self.result_ = fit(data, index, self._config())
        self.model_ = self.result_.model
        self.forward_ = inverse_to_forward(self.model_) if self.degree == 1 else None
        self.n_features_in_ = data.x_dim
        self._y_dim = data.y_dim
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        if self.forward_ is None:
            raise ValueError("prediction requires affine experts (degree=1)")
        X = check_array(X, ensure_2d=True, dtype=float)
        out = predict_mean(self.forward_, X)
        return out[:, 0] if self._y_dim == 1 else out

    def log_density(self, X, y):
        """Per-row log conditional density of X given y under the fit."""
        check_is_fitted(self, "model_")
        data = _validated_pair(X, y, "ignore")
        return log_cond_density(self.model_, data.x, data.y)


class BlockMoeSelector(RegressorMixin, BaseEstimator):
    """Penalized model selection over cluster counts, degrees, and block
    structures, with slope-heuristic calibration of the penalty constant.

    After ``fit``, ``selection_`` holds the full result, ``best_index_``
    the chosen index, and ``model_`` the corresponding fitted model.
    """

    def __init__(self, max_components=3, max_degree=1, threshold_count=8,
                 max_structures=20, kappa=None, method="slope_fit",
                 fraction=0.5, max_iter=500, tol=1e-8, n_starts=5,
                 init="kmeans", bounds=None, y_rescale="warn", random_state=0):
        self.max_components = max_components
        self.max_degree = max_degree
        self.threshold_count = threshold_count
        self.max_structures = max_structures
        self.kappa = kappa
        self.method = method
        self.fraction = fraction
        self.max_iter = max_iter
        self.tol = tol
        self.n_starts = n_starts
        self.init = init
        self.bounds = bounds
        self.y_rescale = y_rescale
        self.random_state = random_state

    def fit(self, X, y):
        data = _validated_pair(X, y, self.y_rescale)
        fit_config = FitConfig(max_iters=self.max_iter, rel_tol=self.tol,
                               n_starts=self.n_starts,
                               seed=int(self.random_state),
                               init_strategy=self.init,
                               bounds=self.bounds if self.bounds is not None else Bounds())
        det = DetectionConfig(threshold_count=self.threshold_count,
                              max_structures=self.max_structures)
        self.selection_, fits = run_selection(
            data, self.max_components, self.max_degree, det, fit_config,
            method=self.method, fraction=self.fraction, kappa=self.kappa)
        self.best_index_ = self.selection_.selected
        self.table_ = self.selection_.table
        self.kappa_hat_ = self.selection_.kappa_hat
        self.kappa_used_ = self.selection_.kappa_used
        self.result_ = fits[self.best_index_]
        self.model_ = self.result_.model
        self.forward_ = (inverse_to_forward(self.model_)
                         if self.best_index_.degree == 1 else None)
        self.n_features_in_ = data.x_dim
        self._y_dim = data.y_dim
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        if self.forward_ is None:
            raise ValueError("the selected model has degree > 1; no closed-"
                             "form forward map exists for prediction")
        X = check_array(X, ensure_2d=True, dtype=float)
        out = predict_mean(self.forward_, X)
        return out[:, 0] if self._y_dim == 1 else out
