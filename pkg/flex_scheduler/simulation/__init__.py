from .experiments import (
    ComparisonBundle,
    average_reports,
    experiment_variants,
    load_experiment_config,
    load_market,
    resolve_datasets,
    run_comparisons,
    simulate,
)
from .oracle import GroundTruth, OracleUser, UserDecision, simulate_user_decision
from .prequential import Dataset, observe_days, run_prequential
from .synthetic import builtin_categories, generate_synthetic, true_rate

__all__ = [
    "ComparisonBundle",
    "Dataset",
    "GroundTruth",
    "OracleUser",
    "UserDecision",
    "average_reports",
    "builtin_categories",
    "experiment_variants",
    "generate_synthetic",
    "load_experiment_config",
    "load_market",
    "observe_days",
    "resolve_datasets",
    "run_comparisons",
    "run_prequential",
    "simulate",
    "simulate_user_decision",
    "true_rate",
]
