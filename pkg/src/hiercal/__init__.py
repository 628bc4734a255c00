"""hiercal: calibrated bottom-up hierarchical classification on top of a
flat classifier's logits.

The pipeline compresses logit vectors (confusion-based tail aggregation,
PCA, tree grouping, or baselines), fits a grid of logistic posterior
estimators on an argmax-partitioned validation set, performs monotone
bottom-up inference over a label hierarchy (or threshold-sum label sets
without one), and scores results with nine outcome criteria, scaled
information gain, TOPSIS, and expected calibration error.
"""

from .calibration import (
    FitDivergenceError,
    PosteriorEstimator,
    PosteriorModel,
    evaluate_estimator,
    fit_estimators,
    fit_logistic,
    load_model,
    read_model,
    write_model,
)
from .compression import (
    ConfusionPlan,
    PcaProjection,
    TreePlan,
    aggregate_logits,
    build_confusion_plan,
    build_tree_plan,
    compress_confusion,
    compress_pca,
    compress_single_logit,
    compress_tree,
    fit_compressor,
    fit_pca,
    softmax,
)
from .dataset import (
    DatasetError,
    LogitDataset,
    SyntheticConfig,
    argmax_label,
    build_confusion,
    dump_dataset,
    generate_synthetic,
    load_dataset,
    partition_by_prediction,
    subsample_per_class,
)
from .estimator import HierarchicalCalibrator
from .hierarchy import HierarchyError, LabelHierarchy, load_hierarchy, parse_hierarchy
from .inference import (
    HierarchicalPrediction,
    ancestral_posteriors,
    infer_many,
    infer_set,
    infer_tree,
)
from .metrics import (
    MetricReport,
    avg_sig,
    classify_outcome,
    ece,
    evaluate_predictions,
    report_to_text,
    topsis,
)
from .selection import LevelSearchResult, choose_level, loocv_select

__version__ = "0.1.0"

__all__ = [
    "FitDivergenceError",
    "PosteriorEstimator",
    "PosteriorModel",
    "evaluate_estimator",
    "fit_estimators",
    "fit_logistic",
    "load_model",
    "read_model",
    "write_model",
    "ConfusionPlan",
    "PcaProjection",
    "TreePlan",
    "aggregate_logits",
    "build_confusion_plan",
    "build_tree_plan",
    "compress_confusion",
    "compress_pca",
    "compress_single_logit",
    "compress_tree",
    "fit_compressor",
    "fit_pca",
    "softmax",
    "DatasetError",
    "LogitDataset",
    "SyntheticConfig",
    "argmax_label",
    "build_confusion",
    "dump_dataset",
    "generate_synthetic",
    "load_dataset",
    "partition_by_prediction",
    "subsample_per_class",
    "HierarchicalCalibrator",
    "HierarchyError",
    "LabelHierarchy",
    "load_hierarchy",
    "parse_hierarchy",
    "HierarchicalPrediction",
    "ancestral_posteriors",
    "infer_many",
    "infer_set",
    "infer_tree",
    "MetricReport",
    "avg_sig",
    "classify_outcome",
    "ece",
    "evaluate_predictions",
    "report_to_text",
    "topsis",
    "LevelSearchResult",
    "choose_level",
    "loocv_select",
]
