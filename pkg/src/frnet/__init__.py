"""Feature-reweighting convolutional network for EEG trial classification.

Everything runs on a small reverse-mode autodiff core over numpy arrays; the
convolution kernels are compiled when the extension is built.
"""
from .data import SynthSpec, TrialSet, load_eegb, minmax_normalize, save_eegb, synthesize
from .errors import ConfigError, FormatError, FrnetError, GeometryError, InvalidInputError, PartitionError
from .kernels import BACKEND
from .network import NetworkConfig, NetworkParams, forward, predict_logits
from .training import TrainConfig, cross_validate, fit_fold, xavier_init

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "FormatError", "FrnetError", "GeometryError", "InvalidInputError",
    "NetworkConfig", "NetworkParams", "PartitionError", "SynthSpec", "TrainConfig", "TrialSet",
    "cross_validate", "fit_fold", "forward", "load_eegb", "minmax_normalize", "predict_logits",
    "save_eegb", "synthesize", "xavier_init",
]
