"""Penalized point-process regression.

Regularized (weighted) Poisson and logistic estimating equations for
log-linear spatial intensity functions, with convex and non-convex
penalties, lambda-path coordinate descent, WQBIC model selection, and a
replication harness for the simulation designs.
"""

from .errors import (AlgorithmError, ConfigurationError, ConvergenceError,
                     DomainError, PprError, RankError)
from .geom import CovariateField, PointPattern, Window, read_pattern, read_raster, write_pattern, write_raster
from .penalties import PenaltySpec, adaptive_lambdas, cd_update, penalty_d1, penalty_d2, penalty_value, soft_threshold, theory_sequences
from .quadrature import QuadratureScheme, build_berman_turner, build_logistic_scheme, default_nd
from .simulate import (RngSeed, ThomasParams, calibrate_intercept, dummy_process,
                       gaussian_kernel, gen_scenario_covariates, simulate_poisson,
                       simulate_thomas, synthetic_terrain)
from .solver import FitConfig, FitResult, fit, fit_path, fit_unpenalized, irls_working, lambda_grid, loglik, score
from .summaries import (SandwichVariance, WeightSurface, f_hat, ripley_k,
                        sandwich_variance, weight_surface_logistic, weight_surface_poisson)
from .experiment import (ExperimentSpec, MetricTable, prediction_metrics, run_experiment,
                         selection_metrics)

__version__ = "0.1.0"
