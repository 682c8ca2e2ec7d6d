"""Denoising autoencoders with a continuous metric loss for speech-emotion embeddings."""

from .dae import DaeModel, build_model, corrupt, encode, joint_loss, reconstruction_loss
from .data import LabeledDataset, SyntheticConfig, generate_synthetic, load_csv
from .estimator import MetricDAE
from .evaluate import (LinearSVC, OlsResult, balanced_accuracy, f_survival, ols_distance_analysis,
                       ols_fit, ols_label_analysis)
from .harness import ExperimentConfig, run_classification, run_experiment
from .metric import MetricLossResult, PairDistances, fit_slope, metric_loss, pair_distances
from .preprocess import Scaler, remove_outliers, transfer_standardize

__all__ = [
    "DaeModel", "build_model", "corrupt", "encode", "joint_loss", "reconstruction_loss",
    "LabeledDataset", "SyntheticConfig", "generate_synthetic", "load_csv",
    "MetricDAE",
    "LinearSVC", "OlsResult", "balanced_accuracy", "f_survival", "ols_distance_analysis",
    "ols_fit", "ols_label_analysis",
    "ExperimentConfig", "run_classification", "run_experiment",
    "MetricLossResult", "PairDistances", "fit_slope", "metric_loss", "pair_distances",
    "Scaler", "remove_outliers", "transfer_standardize",
]
__version__ = "0.1.0"
