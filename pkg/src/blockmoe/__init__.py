"""Block-diagonal localized mixture of polynomial experts.

Conditional density estimation with Gaussian-gated polynomial-mean
experts whose covariances are block-diagonal under learnable partitions;
EM fitting under bounded parameter spaces, closed-form inverse-to-forward
mapping for prediction, tensorized divergence estimation, and
non-asymptotic penalized model selection calibrated by the slope
heuristic.
"""

from .blocks import (BlockPartition, BlockStructureSet, canonicalize,
                     cov_dim, detect_candidates, project_to_blocks)
from .density import (gaussian_logpdf, log_cond_density, log_gating,
                      log_joint_density, nll)
from .divergences import (DivergenceEstimate, MixtureConditional,
                          PairedDivergences, c_rho, gaussian_ratio_bound,
                          hellinger_gaussian_exact, jkl_upper_bound,
                          kl_gaussian_exact, mc_divergence_suite,
                          mc_hellinger_tensorized, mc_jkl_tensorized,
                          mc_kl_tensorized)
from .em import FitConfig, FitResult, e_step, fit, init_params, m_step
from .errors import (BlockMoeError, BoundsViolationError,
                     ComponentCollapseError, CsvFormatError,
                     DecompositionError, FitFailureError,
                     InsufficientDataError, InvalidPartitionError,
                     PreconditionError, ScenarioError, ShapeError,
                     UnsupportedDegreeError)
from .estimators import BlockMoeRegressor, BlockMoeSelector
from .forward import (ForwardParams, inverse_to_forward,
                      log_forward_cond_density, predict_mean)
from .model import (BlockMoeModel, Bounds, Dataset, ExpertParams,
                    GatingParams, ModelIndex, enumerate_monomials,
                    eval_poly_mean, model_dim, monomial_features,
                    n_monomials)
from .selection import (DetectionConfig, SelectionResult, SelectionRow,
                        SelectionTable, build_collection, complexity_bound,
                        fit_collection, pen_shape, run_selection, select,
                        slope_heuristic)
from .simulate import (McConfig, ModelSpec, OracleCell, OracleReport,
                       Scenario, make_true_model, oracle_experiment,
                       sample_covariates, sample_dataset)

__version__ = "0.1.0"
