"""Hierarchical attention change detection for bi-temporal image pairs."""
from .config import Ablation, BackboneConfig, DataConfig, ExperimentConfig, SynthConfig, TrainConfig
from .data import ImagePair, load_dataset, synth_pair, synth_split
from .head import classify, loss
from .metrics import ConfusionCounts, accumulate, render_error_map, scores
from .model import HA2F, n_parameters
from .trainer import fit, poly_lr, run_ablation

__version__ = "0.1.0"

__all__ = [
    "Ablation", "BackboneConfig", "DataConfig", "ExperimentConfig", "SynthConfig", "TrainConfig",
    "ImagePair", "load_dataset", "synth_pair", "synth_split", "classify", "loss",
    "ConfusionCounts", "accumulate", "render_error_map", "scores", "HA2F", "n_parameters",
    "fit", "poly_lr", "run_ablation",
]
