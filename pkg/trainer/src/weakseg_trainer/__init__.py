"""Patch-classifier training and export for the weakseg pipeline."""

from .config import DataError, ExportError, ManifestError, TrainConfig, TrainerError
from .export import export_cam, export_model, export_scores
from .gradcampp import gradcam_pp
from .models import build_model, crack_probabilities
from .train import load_checkpoint, train

__version__ = "0.1.0"
