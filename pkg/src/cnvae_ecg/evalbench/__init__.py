"""Downstream evaluation: AUROC, a small residual classifier and enrichment experiments."""
from .classifier import (ClassifierCheckpoint, ClassifierConfig, ResNet1d, TrainResult, evaluate,
                         predict_scores, records_to_array, train_classifier)
from .enrichment import (MODES, EnrichedSet, balance_pretrain, class_counts, enrich_binary,
                         planned_additions, pretrain_topups, round_half_up)
from .experiment import (COLUMNS, EnrichmentPlan, MetricRow, MetricsReport, Splits, check_leakage,
                         run_enrichment, run_experiment, run_transfer)
from .metrics import auroc, per_class_auroc

__all__ = [
    "ClassifierCheckpoint", "ClassifierConfig", "ResNet1d", "TrainResult", "evaluate", "predict_scores",
    "records_to_array", "train_classifier", "MODES", "EnrichedSet", "balance_pretrain", "class_counts",
    "enrich_binary", "planned_additions", "pretrain_topups", "round_half_up", "COLUMNS", "EnrichmentPlan",
    "MetricRow", "MetricsReport", "Splits", "check_leakage", "run_enrichment", "run_experiment",
    "run_transfer", "auroc", "per_class_auroc",
]
