"""Propensity score weighting for binary and multiple treatments."""

from .balance import BalanceReport, plot_series, summarize_balance
from .data import Dataset
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    EstimationError,
    FitError,
    FormulaError,
    PswError,
    RankDeficientError,
)
from .estimation import ContrastSpec, PotentialOutcomeMeans, augmented_means, hajek_means
from .formula import Formula, build_design_matrix, parse_formula
from .glm import GlmFamily, fit_binary_logistic, fit_multinomial_logistic, fit_outcome_glm
from .inference import (
    StackedSystem,
    SummaryTable,
    bootstrap_variance,
    sandwich_variance,
    summarize,
)
from .pipeline import AnalysisConfig, prepare, run_analysis, run_design
from .simulation import SCENARIOS, get_scenario, simulate, true_wate
from .trimming import optimal_trim, symmetric_trim
from .weights import PropensityMatrix, WeightScheme, effective_sample_size, tilting, unit_weights

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "BalanceReport",
    "ConfigError",
    "ContrastSpec",
    "ConvergenceError",
    "DataError",
    "Dataset",
    "EstimationError",
    "FitError",
    "Formula",
    "FormulaError",
    "GlmFamily",
    "PotentialOutcomeMeans",
    "PropensityMatrix",
    "PswError",
    "RankDeficientError",
    "SCENARIOS",
    "StackedSystem",
    "SummaryTable",
    "WeightScheme",
    "augmented_means",
    "bootstrap_variance",
    "build_design_matrix",
    "effective_sample_size",
    "fit_binary_logistic",
    "fit_multinomial_logistic",
    "fit_outcome_glm",
    "get_scenario",
    "hajek_means",
    "optimal_trim",
    "parse_formula",
    "plot_series",
    "prepare",
    "run_analysis",
    "run_design",
    "sandwich_variance",
    "simulate",
    "summarize",
    "summarize_balance",
    "symmetric_trim",
    "tilting",
    "true_wate",
    "unit_weights",
]
