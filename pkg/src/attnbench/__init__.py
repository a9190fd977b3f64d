"""Benchmarking toolkit for feature-map attention (SE, CBAM, GC) inside a
from-scratch ResNet-18 pipeline: training, AUC-ROC evaluation, activation
heatmaps, and a blinded review service."""

from .attention import AttentionSpec, CbamModule, GcModule, IdentityAttention, SeModule, make_attention
from .data import DatasetManifest, ImageStore, batches, load_image, scan_and_split
from .errors import (ConfigurationError, ContractError, DimensionError,
                     EvaluationError, IngestionError, TrainingDiverged)
from .experiment import EvalReport, run_experiment
from .gradcam import Heatmap, gradcam, make_panels, overlay
from .resnet import ResNet18, build_resnet18, load_model
from .tensor import Tape, Tensor, backward
from .training import SGD, TrainConfig, auc_roc, cross_entropy, fit, lr_at

__version__ = "0.1.0"

__all__ = [
    "AttentionSpec", "CbamModule", "GcModule", "IdentityAttention", "SeModule",
    "make_attention", "DatasetManifest", "ImageStore", "batches", "load_image",
    "scan_and_split", "ConfigurationError", "ContractError", "DimensionError",
    "EvaluationError", "IngestionError", "TrainingDiverged", "EvalReport",
    "run_experiment", "Heatmap", "gradcam", "make_panels", "overlay",
    "ResNet18", "build_resnet18", "load_model", "Tape", "Tensor", "backward",
    "SGD", "TrainConfig", "auc_roc", "cross_entropy", "fit", "lr_at",
]
