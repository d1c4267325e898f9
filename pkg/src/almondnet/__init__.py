"""Two-class nut/shell image classification, self-contained: annotation
ingest, classical preprocessing, dataset building, a from-scratch CNN
engine, the reference architecture, and a training/evaluation pipeline."""

from . import annotations, architecture, dataset, imageproc, imgio, metrics, nn, pipeline
from .architecture import (
    Checkpoint,
    ModelConfig,
    build_almondnet20,
    build_mini_v1,
    build_stack,
    format_trace,
    instantiate,
    load_checkpoint,
    mini_config,
    save_checkpoint,
    shape_trace,
)
from .dataset import (
    ClassWeights,
    DatasetManifest,
    Sample,
    compute_class_weights,
    generate_synthetic,
    load_manifest,
    materialize,
    save_manifest,
    split_dataset,
)
from .errors import AlmondNetError
from .imageproc import (
    PreprocessParams,
    adaptive_threshold,
    canny,
    gaussian_blur,
    nlm_denoise,
    preprocess_chain,
    to_grayscale,
)
from .metrics import ConfusionMatrix, EvalReport, format_report, metrics_from_confusion
from .pipeline import EpochRecord, TrainConfig, evaluate, predict, train
from .rng import Rng

__version__ = "0.1.0"

__all__ = [
    "AlmondNetError",
    "Checkpoint",
    "ClassWeights",
    "ConfusionMatrix",
    "DatasetManifest",
    "EpochRecord",
    "EvalReport",
    "ModelConfig",
    "PreprocessParams",
    "Rng",
    "Sample",
    "TrainConfig",
    "adaptive_threshold",
    "annotations",
    "architecture",
    "build_almondnet20",
    "build_mini_v1",
    "build_stack",
    "canny",
    "compute_class_weights",
    "dataset",
    "evaluate",
    "format_report",
    "format_trace",
    "gaussian_blur",
    "generate_synthetic",
    "imageproc",
    "imgio",
    "instantiate",
    "load_checkpoint",
    "load_manifest",
    "materialize",
    "metrics",
    "metrics_from_confusion",
    "mini_config",
    "nlm_denoise",
    "nn",
    "pipeline",
    "predict",
    "preprocess_chain",
    "save_checkpoint",
    "save_manifest",
    "shape_trace",
    "split_dataset",
    "to_grayscale",
    "train",
]
