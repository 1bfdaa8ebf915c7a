"""Downstream tasks that turn embeddings into a scalar reward."""
from .evaluate import (
    ClassificationTask,
    ClusteringTask,
    LinkPredictionTask,
    TaskReport,
    eval_classification,
    eval_clustering,
    eval_link_prediction,
    kmeans,
    make_task,
)
from .logreg import OneVsRestLogReg
from .metrics import micro_macro_f1, nmi, precision_at_k, purity
from .splits import LabelSet, SplitError, SplitSpec, make_split, parse_labels, read_labels

__all__ = [
    "ClassificationTask", "ClusteringTask", "LinkPredictionTask", "TaskReport",
    "eval_classification", "eval_clustering", "eval_link_prediction", "kmeans", "make_task",
    "OneVsRestLogReg", "micro_macro_f1", "nmi", "precision_at_k", "purity",
    "LabelSet", "SplitError", "SplitSpec", "make_split", "parse_labels", "read_labels",
]
