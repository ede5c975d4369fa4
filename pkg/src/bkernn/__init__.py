"""Brownian kernel neural networks: kernel ridge regression over learned
one-dimensional projections, with sparsity-inducing particle penalties."""

from .estimators import BKerNN, bkrr_fit_predict, load_model, save_model
from .kernels import ScalarKernelKind
from .metrics import FeatureBasis, extract_features, feature_score, r2_score
from .penalties import PenaltyKind
from .trainer import ModelState, NumericalError, TrainConfig, TrainReport, fit

__all__ = [
    "BKerNN",
    "bkrr_fit_predict",
    "load_model",
    "save_model",
    "ScalarKernelKind",
    "FeatureBasis",
    "extract_features",
    "feature_score",
    "r2_score",
    "PenaltyKind",
    "ModelState",
    "NumericalError",
    "TrainConfig",
    "TrainReport",
    "fit",
]

__version__ = "0.1.0"
