"""Replay-attack detection countermeasure toolkit."""

from .features import (
    AudioBuffer,
    FeatureMatrix,
    GdConfig,
    StftConfig,
    cut_or_pad,
    extract_feature,
    gd_gram,
    lfbank,
    logspec,
    scale_to_unit_range,
    stft,
)
from .model import ModelSpec, build_model, embed, load_checkpoint, save_checkpoint
from .metrics import TrialScore, apply_fusion, compute_eer, fit_fusion

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "FeatureMatrix",
    "GdConfig",
    "ModelSpec",
    "StftConfig",
    "TrialScore",
    "apply_fusion",
    "build_model",
    "compute_eer",
    "cut_or_pad",
    "embed",
    "extract_feature",
    "fit_fusion",
    "gd_gram",
    "lfbank",
    "load_checkpoint",
    "logspec",
    "save_checkpoint",
    "scale_to_unit_range",
    "stft",
    "__version__",
]
