"""Certified sensitivity analysis for L2-regularized linear classifiers.

Given a model trained on a dataset and a small batch of added/removed
instances, this package bounds any linear score of the not-yet-retrained
optimum — per-coefficient intervals, label-flip certificates and accelerated
leave-one-out cross-validation — in time proportional to the update size,
not the dataset size.
"""
from .bounds import (
    BallSource,
    BoundMethod,
    CoefficientBounds,
    Label,
    LabelDecision,
    RESIDUAL_GUARD,
    ScoreBounds,
    SolutionBall,
    StaleOptimumWarning,
    UpdateStats,
    batch_score_bounds,
    classify_with_bounds,
    coefficient_bounds,
    compute_delta_s,
    gradient_ball,
    naive_score_bounds,
    norm_change_bound,
    old_optimum_ball,
    score_bounds,
)
from .data import (
    LibsvmFormatError,
    SparseDataset,
    UpdatePlan,
    apply_update,
    load_libsvm,
    make_synthetic,
    parse_libsvm,
    save_libsvm,
    serialize_libsvm,
    with_bias_feature,
)
from .loocv import (
    DEFAULT_FOLD_TOL,
    THREADS_ENV_VAR,
    FoldDecision,
    FoldOutcome,
    GridCellResult,
    GridPoint,
    LoocvMode,
    LoocvResult,
    ModelSelectResult,
    RbfFeatureMap,
    loocv_fold_bounds,
    model_select,
    rbf_feature_map,
    run_loocv,
)
from .losses import (
    LossKind,
    dloss_dscore,
    dloss_values,
    instance_gradient,
    loss_value,
    loss_values,
    objective,
    objective_gradient,
    value_and_gradient,
)
from .model_io import load_model, save_model
from .solver import (
    SolveReport,
    SolverError,
    TrainedModel,
    incremental_train,
    minimize_smooth,
    reference_gradient_descent,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BallSource",
    "BoundMethod",
    "CoefficientBounds",
    "DEFAULT_FOLD_TOL",
    "FoldDecision",
    "FoldOutcome",
    "GridCellResult",
    "GridPoint",
    "Label",
    "LabelDecision",
    "LibsvmFormatError",
    "LoocvMode",
    "LoocvResult",
    "LossKind",
    "ModelSelectResult",
    "RESIDUAL_GUARD",
    "RbfFeatureMap",
    "ScoreBounds",
    "SolutionBall",
    "SolveReport",
    "SolverError",
    "SparseDataset",
    "StaleOptimumWarning",
    "THREADS_ENV_VAR",
    "TrainedModel",
    "UpdatePlan",
    "UpdateStats",
    "apply_update",
    "batch_score_bounds",
    "classify_with_bounds",
    "coefficient_bounds",
    "compute_delta_s",
    "dloss_dscore",
    "dloss_values",
    "gradient_ball",
    "incremental_train",
    "instance_gradient",
    "load_libsvm",
    "load_model",
    "loocv_fold_bounds",
    "loss_value",
    "loss_values",
    "make_synthetic",
    "minimize_smooth",
    "model_select",
    "naive_score_bounds",
    "norm_change_bound",
    "objective",
    "objective_gradient",
    "old_optimum_ball",
    "parse_libsvm",
    "rbf_feature_map",
    "reference_gradient_descent",
    "run_loocv",
    "save_libsvm",
    "save_model",
    "score_bounds",
    "serialize_libsvm",
    "train",
    "value_and_gradient",
    "with_bias_feature",
]
