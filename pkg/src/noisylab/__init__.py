"""noisylab: a desk-scale laboratory for supervised learning under label
noise — synthetic data with controllable corruption, noise-robust losses and
corrections, re-weighting rules, annotator fusion, training procedures, and
deterministic experiment reports."""

__version__ = "0.1.0"

from .data import LabeledDataset, gen_blobs, gen_rings, load_csv, save_csv, split
from .losses import LossSpec
from .model import TrainConfig, train
from .noise import TransitionMatrix, inject, symmetric_transition
from .numerics import Rng, softmax

__all__ = [
    "LabeledDataset", "LossSpec", "Rng", "TrainConfig", "TransitionMatrix",
    "gen_blobs", "gen_rings", "inject", "load_csv", "save_csv", "softmax",
    "split", "symmetric_transition", "train", "__version__",
]
