"""Debiased risk estimators for learning from positive, unlabeled and exposure data."""

from .core import LabeledSampleSet, LinearScorer, classify, log_loss, logistic
from .datagen import (
    ExposureSpec,
    Problem,
    SplitSpec,
    calibrate_c,
    parse_sparse_dataset,
    resolve_dataset,
    split_for_problem,
    synthesize_observations,
)
from .harness import ExperimentConfig, EvalReport, MethodSpec, load_config, run_experiment, write_outputs
from .risks import RiskEval, RiskKind, RiskSpec, evaluate_risk
from .trainers import TrainConfig, TrainTrace, train_adpue_alternate, train_adpue_direct, train_variant

__all__ = [
    "LabeledSampleSet", "LinearScorer", "classify", "log_loss", "logistic",
    "ExposureSpec", "Problem", "SplitSpec", "calibrate_c", "parse_sparse_dataset",
    "resolve_dataset", "split_for_problem", "synthesize_observations",
    "ExperimentConfig", "EvalReport", "MethodSpec", "load_config", "run_experiment", "write_outputs",
    "RiskEval", "RiskKind", "RiskSpec", "evaluate_risk",
    "TrainConfig", "TrainTrace", "train_adpue_alternate", "train_adpue_direct", "train_variant",
]
