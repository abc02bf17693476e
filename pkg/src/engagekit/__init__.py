"""Per-second student engagement classification from facial embeddings.

The package turns per-frame face embeddings into labeled one-second
sequences, trains from-scratch classifiers over them (SVM, random forest,
MLP, LSTM), compares modality fusion strategies under leave-one-subject-out
evaluation, and personalizes a model to a single student through
margin-based active learning, either simulated or over an HTTP labeling
service.
"""

from .classifiers import (
    ClassifierSpec,
    TrainedModel,
    TrainingReport,
    fit_lstm,
    fit_mlp,
    fit_random_forest,
    fit_svm,
    load_model,
    predict_distribution,
    save_model,
    train_classifier,
)
from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    DegenerateInputError,
    DimensionMismatchError,
    DivergenceError,
    EngageKitError,
    ExhaustedPoolError,
    OracleUnavailableError,
    ParseError,
    ShapeError,
    UndefinedMetricError,
    UnsupportedDistributionError,
    ValueRangeError,
)
from .evaluation import (
    ConfusionMatrix,
    EvaluationReport,
    FoldResult,
    binary_auroc,
    confusion_matrix,
    loso_evaluate,
    save_report,
    training_arrays,
    weighted_auroc,
)
from .fusion import (
    ModalityPair,
    SequencePrediction,
    fuse_features,
    fuse_scores,
    majority_vote,
    paired_entries,
    predict_sequence,
)
from .ingest import (
    DatasetManifest,
    EngagementLevel,
    LabeledSequence,
    LabeledSequenceSet,
    average_raters,
    build_labeled_dataset,
    discretize_engagement,
    icc_absolute_agreement,
    ingest_dataset,
    load_dataset,
    load_manifest,
    save_dataset,
)
from .pca import PcaModel, fit_pca, pca_inverse_transform, pca_transform
from .personalization import (
    MarginQuery,
    PersonalizationSession,
    PoolEntry,
    SimulatedOracle,
    TrainingBundle,
    UnlabeledPool,
    margin_scores,
    run_personalization,
    select_batch,
    split_personal_data,
    start_personalization,
)
from .service import ServiceError, SessionManager, build_student_resources, create_app
from .synthetic import generate_synthetic_dataset
from .tracklets import (
    Detection,
    GalleryEntry,
    Sequence,
    Tracklet,
    assign_identity,
    cosine_similarity,
    select_camera,
    sequences_from_detections,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "ClassifierSpec",
    "ConfigError",
    "ConfusionMatrix",
    "DataError",
    "DatasetManifest",
    "DegenerateInputError",
    "Detection",
    "DimensionMismatchError",
    "DivergenceError",
    "EngageKitError",
    "EngagementLevel",
    "EvaluationReport",
    "ExhaustedPoolError",
    "FoldResult",
    "GalleryEntry",
    "LabeledSequence",
    "LabeledSequenceSet",
    "MarginQuery",
    "ModalityPair",
    "OracleUnavailableError",
    "ParseError",
    "PcaModel",
    "PersonalizationSession",
    "PoolEntry",
    "SequencePrediction",
    "ServiceError",
    "SessionManager",
    "ShapeError",
    "SimulatedOracle",
    "TrainedModel",
    "TrainingBundle",
    "TrainingReport",
    "Tracklet",
    "Sequence",
    "UndefinedMetricError",
    "UnlabeledPool",
    "UnsupportedDistributionError",
    "ValueRangeError",
    "assign_identity",
    "average_raters",
    "binary_auroc",
    "build_labeled_dataset",
    "build_student_resources",
    "confusion_matrix",
    "cosine_similarity",
    "create_app",
    "discretize_engagement",
    "fit_lstm",
    "fit_mlp",
    "fit_pca",
    "fit_random_forest",
    "fit_svm",
    "fuse_features",
    "fuse_scores",
    "generate_synthetic_dataset",
    "icc_absolute_agreement",
    "ingest_dataset",
    "load_dataset",
    "load_manifest",
    "load_model",
    "loso_evaluate",
    "majority_vote",
    "margin_scores",
    "paired_entries",
    "pca_inverse_transform",
    "pca_transform",
    "predict_distribution",
    "predict_sequence",
    "run_personalization",
    "save_dataset",
    "save_model",
    "save_report",
    "select_batch",
    "select_camera",
    "sequences_from_detections",
    "split_personal_data",
    "start_personalization",
    "train_classifier",
    "training_arrays",
    "weighted_auroc",
]
