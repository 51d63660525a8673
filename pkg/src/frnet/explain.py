"""Grad-CAM temporal attribution over named feature maps of the network."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ConfigError, InvalidInputError
from .kernels import Tensor
from .network import NetworkConfig, NetworkParams, forward_with_taps

DEFAULT_LAYER = "fr"


@dataclass
class AttributionMap:
    values: np.ndarray
    target_class: int
    layer_name: str
    trial_id: int = 0

    def mass_fraction(self, start: int, stop: int) -> float:
        """Share of the total map mass inside ``values[start:stop]`` (0 for an all-zero map)."""
        total = float(self.values.sum())
        return float(self.values[start:stop].sum()) / total if total > 0 else 0.0


def cam_from_gradients(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Rectified, max-normalised Grad-CAM curve from (K, H, T) activations and gradients."""
    weights = gradients.mean(axis=(1, 2))
    cam = np.einsum("k,kht->ht", weights, activations).mean(axis=0)
    cam = np.maximum(cam, 0.0)
    peak = cam.max(initial=0.0)
    return cam / peak if peak > 0 else np.zeros_like(cam)


def _trial_tensor(trial: np.ndarray) -> Tensor:
    trial = np.asarray(trial, dtype=np.float64)
    if trial.ndim != 2:
        raise InvalidInputError(f"expected a single (C, W) trial, got shape {trial.shape}")
    return Tensor(trial[None, None], requires_grad=True)


def _backprop_class(trial: np.ndarray, params: NetworkParams, config: NetworkConfig, target_class: int):
    if not 0 <= target_class < config.classes:
        raise ConfigError(f"target class {target_class} outside [0, {config.classes})")
    params.set_requires_grad(False)
    x = _trial_tensor(trial)
    logits, taps = forward_with_taps(x, params, config, training=False)
    seed = np.zeros(logits.shape)
    seed[0, target_class] = 1.0
    logits.backward(seed)
    return taps


def available_layers(params: NetworkParams, config: NetworkConfig) -> list[str]:
    dummy = np.zeros((config.electrodes, config.trial_length))
    params.set_requires_grad(False)
    _, taps = forward_with_taps(dummy, params, config)
    return sorted(taps)


def grad_cam(trial: np.ndarray, params: NetworkParams, config: NetworkConfig, target_class: int,
             layer: str = DEFAULT_LAYER, trial_id: int = 0) -> AttributionMap:
    """Attribution of ``target_class`` over the time axis of feature map ``layer``.

    The default tap is the FR output (the reweighted maps summed). Any name
    from :func:`available_layers` may be used.
    """
    taps = _backprop_class(trial, params, config, target_class)
    if layer not in taps:
        raise ConfigError(f"unknown layer {layer!r}; available: {', '.join(sorted(taps))}")
    tap = taps[layer]
    acts = tap.data[0]
    grads = tap.grad[0] if tap.grad is not None else np.zeros_like(acts)
    return AttributionMap(cam_from_gradients(acts, grads), target_class, layer, trial_id)


def electrode_attribution(trial: np.ndarray, params: NetworkParams, config: NetworkConfig,
                          target_class: int) -> np.ndarray:
    """Per-electrode mean |gradient x input| of the class logit, max-normalised."""
    taps = _backprop_class(trial, params, config, target_class)
    x = taps["input"]
    score = np.abs(x.grad[0, 0] * x.data[0, 0]).mean(axis=1)
    peak = score.max(initial=0.0)
    return score / peak if peak > 0 else score


def export_map(amap: AttributionMap, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_index", "activation"])
        for i, v in enumerate(amap.values):
            w.writerow([i, f"{v:.9g}"])


def export_electrodes(scores: np.ndarray, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["electrode", "attribution"])
        for i, v in enumerate(scores):
            w.writerow([i, f"{v:.9g}"])


def read_map(path: Union[str, Path]) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["time_index", "activation"]:
        raise InvalidInputError(f"{path}: not an attribution CSV")
    return np.array([float(r[1]) for r in rows[1:]])
