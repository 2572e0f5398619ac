"""heatreg: joint sparse regression across populations with unequal error variances."""

from .approx import (PilotVariances, fit_aen, fit_heat_approx, fit_sen,
                     fit_sen_all, natural_lasso_pilot, natural_lasso_sigma)
from .dataset import (DataError, MultiPopDataset, PopulationBlock,
                      StandardizeOptions, build_dataset, load_dataset,
                      read_manifest, standardize)
from .elastic_net import EnetCVResult, EnetFit, cv_elastic_net, elastic_net
from .estimators import (AenRegressor, HeatApproxRegressor, HeatRegressor,
                         SenRegressor)
from .model_file import (ModelFile, ModelFileError, export_weights,
                         model_from_fit, read_model, write_model)
from .objective import (CoefficientState, FitResult, grad_theta, kkt_residual,
                        loss_original, loss_reparam, rho_root, rho_update)
from .penalty import (PenaltyParams, lambda_grid, lambda_max, penalty_value,
                      prox_matrix, prox_sparse_group)
from .simulation import (SimScenario, gen_coefficients, gen_genotypes,
                         gen_responses, generate_replicate, run_experiment,
                         summarize)
from .solver import (SolverConfig, fit_heat, fit_heat_oracle, fit_heat_path,
                     fit_reheat)
from .tuning import (CVPlan, CVResult, MetricReport, compute_metrics,
                     cross_validate, fit_cv, rme, rmse, test_r2)

__version__ = "0.1.0"

__all__ = [
    "AenRegressor", "CVPlan", "CVResult", "CoefficientState", "DataError",
    "EnetCVResult", "EnetFit", "FitResult", "HeatApproxRegressor",
    "HeatRegressor", "MetricReport", "ModelFile", "ModelFileError",
    "MultiPopDataset", "PenaltyParams", "PilotVariances", "PopulationBlock",
    "SenRegressor", "SimScenario", "SolverConfig", "StandardizeOptions",
    "build_dataset", "compute_metrics", "cross_validate", "cv_elastic_net",
    "elastic_net", "export_weights", "fit_aen", "fit_cv", "fit_heat",
    "fit_heat_approx", "fit_heat_oracle", "fit_heat_path", "fit_reheat",
    "fit_sen", "fit_sen_all", "gen_coefficients", "gen_genotypes",
    "gen_responses", "generate_replicate", "grad_theta", "kkt_residual",
    "lambda_grid", "lambda_max", "load_dataset", "loss_original",
    "loss_reparam", "model_from_fit", "natural_lasso_pilot",
    "natural_lasso_sigma", "penalty_value", "prox_matrix",
    "prox_sparse_group", "read_manifest", "read_model", "rho_root",
    "rho_update", "rme", "rmse", "run_experiment", "standardize",
    "summarize", "test_r2", "write_model",
]
