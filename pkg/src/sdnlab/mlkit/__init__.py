"""Dataset handling, feature selection, four classifiers, evaluation and persistence."""

from .data import (
    Dataset,
    DegenerateLabels,
    FeatureMismatch,
    Scaler,
    Selection,
    SplitSpec,
    SplitTooSmall,
    correlation_matrix,
    correlation_select,
    pearson,
    split,
    split_indices,
)
from .metrics import EvalReport, auc, confusion, evaluate, evaluate_scores, roc_curve
from .models import (
    DEFAULTS,
    KINDS,
    AdaBoost,
    DecisionTree,
    KNearestNeighbors,
    LogisticRegression,
    RandomForest,
    TrainedModel,
    fit,
    tree_seeds,
)
from .persist import ModelFormatError, load_model, model_from_dict, model_to_dict, save_model

__all__ = [
    "Dataset", "DegenerateLabels", "FeatureMismatch", "Scaler", "Selection", "SplitSpec",
    "SplitTooSmall", "correlation_matrix", "correlation_select", "pearson", "split",
    "split_indices", "EvalReport", "auc", "confusion", "evaluate", "evaluate_scores", "roc_curve",
    "DEFAULTS", "KINDS", "AdaBoost", "DecisionTree", "KNearestNeighbors", "LogisticRegression",
    "RandomForest", "TrainedModel", "fit", "tree_seeds", "ModelFormatError", "load_model",
    "model_from_dict", "model_to_dict", "save_model",
]
