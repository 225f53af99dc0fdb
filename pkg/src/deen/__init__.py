"""Deep energy estimator networks: MLP energies trained by Parzen score matching."""

from .core import Rng, gaussian, logsumexp, matvec
from .data import Dataset, MoGSpec, NoisyPairBatch
from .model import NetConfig, NetParams, energy, init_params, score
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "MoGSpec", "NetConfig", "NetParams", "NoisyPairBatch", "Rng",
    "TrainConfig", "energy", "gaussian", "init_params", "logsumexp", "matvec",
    "score", "train",
]
