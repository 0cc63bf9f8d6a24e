"""Robust generalized linear models via minimum density power divergence."""

from .families import Bernoulli, Binomial, GammaSet, Gaussian, Poisson, make_family
from .model import ModelSpec
from .solver import (
    FitResult,
    SolverOptions,
    StartSource,
    estimating_function,
    fit,
    fit_path,
    objective,
)
from .inference import (
    SandwichMatrices,
    WaldRow,
    WaldTable,
    relative_efficiency,
    sandwich,
    wald_table,
)
from .influence import (
    InfluenceReport,
    influence,
    influence_grid_export,
    influence_report,
    sensitivities,
)
from .tuning import AlphaSelection, MseEntry, estimated_mse, select_alpha
from .simulate import SimResult, SimScenario, build_case, run_scenario, table_render
from .estimator import DensityPowerGLM

__version__ = "0.1.0"

__all__ = [
    "Bernoulli", "Binomial", "GammaSet", "Gaussian", "Poisson", "make_family",
    "ModelSpec", "FitResult", "SolverOptions", "StartSource",
    "estimating_function", "fit", "fit_path", "objective",
    "SandwichMatrices", "WaldRow", "WaldTable",
    "relative_efficiency", "sandwich", "wald_table",
    "InfluenceReport", "influence", "influence_grid_export",
    "influence_report", "sensitivities",
    "AlphaSelection", "MseEntry", "estimated_mse", "select_alpha",
    "SimResult", "SimScenario", "build_case", "run_scenario", "table_render",
    "DensityPowerGLM",
    "__version__",
]
