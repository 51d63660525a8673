"""The feature-reweighting classifier: Stem, MFE, FR and Prediction modules."""
from .config import ABLATION_LABELS, ABLATIONS, NetworkConfig
from .model import (
    FrIntermediates,
    as_input,
    cfs_score,
    forward,
    forward_with_taps,
    fr_forward,
    fuse_scores,
    mfe_forward,
    predict_logits,
    prediction_forward,
    softmax,
    stem_forward,
    tfs_score,
)
from .params import NetworkParams, ParamSpec, batch_norm_layers, layer_specs
from .weights_io import load_weights, save_weights

__all__ = [
    "ABLATIONS", "ABLATION_LABELS", "FrIntermediates", "NetworkConfig", "NetworkParams", "ParamSpec",
    "as_input", "batch_norm_layers", "cfs_score", "forward", "forward_with_taps", "fr_forward",
    "fuse_scores", "layer_specs", "load_weights", "mfe_forward", "predict_logits", "prediction_forward",
    "save_weights", "softmax", "stem_forward", "tfs_score",
]
