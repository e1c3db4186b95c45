"""Learning components for the in-wall radar toolkit."""

from .data import DatasetFormatError, ImagingPairs, PolarizationSamples, load_manifest, read_blob, write_blob
from .inet import INet, INetConfig, denormalize, evaluate_l1, predict_image, train_inet
from .mnet import (
    FEATURE_DIM,
    MNet,
    MNetConfig,
    confusion_matrix,
    evaluate_accuracy,
    grl,
    project_conflicting,
    save_confusion_json,
    train_adversarial,
)

__version__ = "0.1.0"
