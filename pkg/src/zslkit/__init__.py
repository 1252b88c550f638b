"""Zero-shot learning with Gaussian distribution embeddings and triplet constraints.

Image features and class-attribute vectors are mapped by two small MLPs into
a shared latent space of diagonal Gaussians, trained with a margin hinge loss
over online-mined hard-negative triplets under the closed-form squared
2-Wasserstein distance. Prediction is nearest-neighbor over class
distributions; the generalized setting can additionally sample synthetic
latent features per class and train a linear softmax classifier on them.
"""

__version__ = "0.1.0"

from .data import SyntheticSpec, ZslDataset, load_dataset, make_synthetic, save_dataset
from .encoder import Encoder, EncoderConfig
from .errors import ZslError
from .estimator import GaussianTripletZSL
from .evaluation import (
    EvalReport,
    GenerationConfig,
    evaluate,
    harmonic_mean,
    per_class_top1,
    predict_zsl,
)
from .gaussian import (
    DiagGaussian,
    DistanceKind,
    GaussianBatch,
    bhattacharyya,
    kl_divergence,
    sample,
    w2_squared,
    w2_squared_backward,
)
from .mining import mine_negatives, triplet_loss
from .training import RunLog, TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "DiagGaussian",
    "DistanceKind",
    "Encoder",
    "EncoderConfig",
    "EvalReport",
    "GaussianBatch",
    "GaussianTripletZSL",
    "GenerationConfig",
    "RunLog",
    "SyntheticSpec",
    "TrainConfig",
    "ZslDataset",
    "ZslError",
    "bhattacharyya",
    "evaluate",
    "harmonic_mean",
    "kl_divergence",
    "load_checkpoint",
    "load_dataset",
    "make_synthetic",
    "mine_negatives",
    "per_class_top1",
    "predict_zsl",
    "sample",
    "save_checkpoint",
    "save_dataset",
    "train",
    "triplet_loss",
    "w2_squared",
    "w2_squared_backward",
]
