"""Linear classification from label-noise-corrupted data.

The corrupted labels alone are enough to train a linear classifier, provided
the corruption's class-confusion matrix is known and invertible: inverting it
turns per-class feature averages of the noisy data into unbiased estimates of
the clean ones, and those drive an ultraconservative additive update rule.
This package implements that learner, a standard multiclass perceptron to
compare against, synthetic data generators, evaluation metrics, sample-size
bound calculators, and a command-line experiment harness.
"""
from ._kernels import backend, warmup
from .baselines import PerceptronConfig, PerceptronSummary, train_perceptron
from .bounds import BoundQuery, deviation_bound, min_sample_size, sample_size_grid
from .errors import (
    ConfigError,
    DatasetFormatError,
    DimensionMismatchError,
    EmptyTestSetError,
    GenerationStalledError,
    InvalidConfusionError,
    InvalidQueryError,
    MissingLabelsError,
    NoViableCandidateError,
    SingularMatrixError,
    UnconfusedError,
)
from .metrics import (
    DegradedEstimate,
    EvalReport,
    dist_classwise,
    dist_confusion,
    dist_couplewise,
    dist_error,
    estimate_confusion_from_pairs,
    evaluate,
    load_report_json,
    save_report_json,
)
from .problem import (
    MISSING,
    ConfusionMatrix,
    ConfusionReport,
    LabeledDataset,
    LinearModel,
    load_confusion_json,
    load_dataset_csv,
    load_model_json,
    margin_of,
    predict,
    predict_batch,
    save_confusion_json,
    save_dataset_csv,
    save_model_json,
    validate_confusion,
)
from .rng import RngStream
from .synthgen import (
    SynthConfig,
    corrupt,
    generate_concept,
    generate_dataset,
    generate_sweep_matrices,
    sweep_level_matrix,
)
from .uma import (
    ClassPriorEstimate,
    IterationTrace,
    UmaConfig,
    UmaDiagnostics,
    UpdateCandidate,
    all_candidates,
    apply_update,
    error_set,
    estimate_class_priors,
    noisy_class_sums,
    region_indices,
    select_pair,
    step_coefficients,
    train,
    update_candidate,
)

__version__ = "0.1.0"

__all__ = [
    "BoundQuery", "ClassPriorEstimate", "ConfigError", "ConfusionMatrix",
    "ConfusionReport", "DatasetFormatError", "DegradedEstimate",
    "DimensionMismatchError", "EmptyTestSetError", "EvalReport",
    "GenerationStalledError", "InvalidConfusionError", "InvalidQueryError",
    "IterationTrace", "LabeledDataset", "LinearModel", "MISSING",
    "MissingLabelsError", "NoViableCandidateError", "PerceptronConfig",
    "PerceptronSummary", "RngStream", "SingularMatrixError", "SynthConfig",
    "UmaConfig", "UmaDiagnostics", "UnconfusedError", "UpdateCandidate",
    "all_candidates", "apply_update", "backend", "corrupt", "deviation_bound",
    "dist_classwise", "dist_confusion", "dist_couplewise", "dist_error",
    "error_set", "estimate_class_priors", "estimate_confusion_from_pairs",
    "evaluate", "generate_concept", "generate_dataset",
    "generate_sweep_matrices", "load_confusion_json", "load_dataset_csv",
    "load_model_json", "load_report_json", "margin_of", "min_sample_size",
    "noisy_class_sums", "predict", "predict_batch", "region_indices",
    "sample_size_grid", "save_confusion_json", "save_dataset_csv",
    "save_model_json", "save_report_json", "select_pair", "step_coefficients",
    "sweep_level_matrix", "train", "train_perceptron", "update_candidate",
    "validate_confusion", "warmup",
]
