"""Evaluation harness: splits, metrics, and experiment drivers."""

from .experiments import (
    AttributeGroup,
    ExperimentConfig,
    ExperimentReport,
    GridResult,
    SeedResult,
    SweepPoint,
    TrialRecord,
    aggregate_subjects,
    attribute_report,
    cutoff_sweep,
    grid_search,
    run_experiment,
)
from .metrics import Metrics, compute_metrics, majority_baseline_uf1
from .splits import (
    DEFAULT_RATIOS,
    SPLIT_NAMES,
    SplitPlan,
    SubjectTable,
    load_plan,
    make_folds,
    make_split,
    save_plan,
    validate_plan,
)

__all__ = [
    "AttributeGroup",
    "ExperimentConfig",
    "ExperimentReport",
    "GridResult",
    "SeedResult",
    "SweepPoint",
    "TrialRecord",
    "aggregate_subjects",
    "attribute_report",
    "cutoff_sweep",
    "grid_search",
    "run_experiment",
    "Metrics",
    "compute_metrics",
    "majority_baseline_uf1",
    "DEFAULT_RATIOS",
    "SPLIT_NAMES",
    "SplitPlan",
    "SubjectTable",
    "load_plan",
    "make_folds",
    "make_split",
    "save_plan",
    "validate_plan",
]
