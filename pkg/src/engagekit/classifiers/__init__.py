"""Classifier families over engagement levels.

All five families (linear SVM, RBF SVM, random forest, MLP, LSTM) emit a
probability distribution over the three levels.  Frame-mode families consume
one embedding vector (the middle frame of a second); the LSTM consumes the
full 24-frame sequence.
"""

from .base import (
    MIDDLE_FRAME_INDEX,
    ClassifierSpec,
    TrainedModel,
    TrainingReport,
    predict_distribution,
    train_classifier,
    validate_distribution,
)
from .forest import ForestModel, fit_random_forest
from .lstm import LstmModel, LstmNet, fit_lstm
from .mlp import MlpModel, MlpNet, fit_mlp
from .serialize import load_model, save_model
from .svm import PlattSigmoid, SvmModel, fit_svm, platt_calibrate

__all__ = [
    "MIDDLE_FRAME_INDEX",
    "ClassifierSpec",
    "ForestModel",
    "LstmModel",
    "LstmNet",
    "MlpModel",
    "MlpNet",
    "PlattSigmoid",
    "SvmModel",
    "TrainedModel",
    "TrainingReport",
    "fit_lstm",
    "fit_mlp",
    "fit_random_forest",
    "fit_svm",
    "load_model",
    "platt_calibrate",
    "predict_distribution",
    "save_model",
    "train_classifier",
    "validate_distribution",
]
