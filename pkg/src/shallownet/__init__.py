"""Shallow CNN classifiers for thin-smear red blood cell images."""
from ._accel import backend
from .data import AugmentParams, DatasetManifest, Sample, augment, ingest, load_image, split
from .gradcam import Heatmap, overlay
from .metrics import ConfusionMatrix, MetricsReport, RocCurve, auc, confusion, report, roc_curve
from .nn import Model, ModelSpec, backward, build_model, forward, load_model, save_model
from .train import EpochStats, TrainConfig, benchmark_single_image, fit

__version__ = "0.1.0"
