"""Forward pass: Stem -> MFE -> FR (TFS, CFS, score fusion) -> Prediction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, GeometryError, InvalidInputError
from ..kernels import (
    Tensor,
    adaptive_avg_pool,
    batch_norm,
    broadcast_to,
    concat_channels,
    conv2d,
    depthwise_conv2d,
    dropout,
    elu,
    global_avg_pool,
    linear,
    mul,
    pair_softmax,
    relu,
    reshape,
    separable_conv2d,
    slice_features,
    upsample_nearest,
)
from .config import ABLATIONS, NetworkConfig
from .params import NetworkParams


@dataclass
class FrIntermediates:
    F: Tensor
    F1: Tensor
    F2: Tensor
    F_hat: Tensor
    s_tfs: Optional[Tensor]
    s_cfs: Optional[Tensor]
    w_tfs: Optional[Tensor]
    w_cfs: Optional[Tensor]
    F1_hat: Optional[Tensor]
    F2_hat: Optional[Tensor]


def as_input(x) -> Tensor:
    """Accept trials as (B, C, W) arrays or (B, 1, C, W) tensors."""
    if isinstance(x, Tensor):
        t = x
    else:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim == 3:
            arr = arr[:, None]
        t = Tensor(arr)
    if t.ndim != 4 or t.shape[1] != 1:
        raise GeometryError(f"expected trials shaped (B, 1, C, W), got {t.shape}")
    return t


def stem_forward(x: Tensor, params: NetworkParams, config: NetworkConfig, training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
    if x.shape[2] != config.electrodes:
        raise GeometryError(f"stem: trials have {x.shape[2]} electrodes, network expects {config.electrodes}")
    if x.shape[3] < config.stem_temporal_kernel:
        raise ConfigError(f"stem: trial length {x.shape[3]} shorter than temporal kernel {config.stem_temporal_kernel}")
    if x.shape[3] < config.stem_pool:
        raise ConfigError(f"stem: trial length {x.shape[3]} shorter than pooled length {config.stem_pool}")
    h = conv2d(x, params.layer("stem.conv"), "same")
    h = batch_norm(h, params.layer("stem.bn"), training)
    h = depthwise_conv2d(h, params.layer("stem.dconv"), config.stem_depth_multiplier, "valid")
    h = elu(h, config.elu_alpha)
    h = dropout(h, config.dropout_p, training, rng)
    return adaptive_avg_pool(h, (1, config.stem_pool))


def mfe_forward(f: Tensor, params: NetworkParams, config: NetworkConfig, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
    t = f.shape[3]
    branches = []
    for i, k in enumerate(config.mfe_branch_kernels):
        if k > t:
            raise ConfigError(f"mfe: branch kernel {k} exceeds temporal length {t}")
        h = conv2d(f, params.layer(f"mfe.branch{i}.reduce"), "valid")
        h = depthwise_conv2d(h, params.layer(f"mfe.branch{i}.dconv1"), 1, "same")
        h = dropout(h, config.dropout_p, training, rng)
        h = depthwise_conv2d(h, params.layer(f"mfe.branch{i}.dconv2"), 1, "same")
        branches.append(h)
    if config.mfe_pool_branch:
        h = adaptive_avg_pool(f, (1, t // 2))
        h = upsample_nearest(h, (1, 2))
        branches.append(conv2d(h, params.layer("mfe.pool.proj"), "valid"))
    return concat_channels(branches)


def tfs_score(f_hat: Tensor, params: NetworkParams, config: NetworkConfig) -> Tensor:
    """Temporal feature score, shape (B, T)."""
    b, _, _, t = f_hat.shape
    fc = elu(conv2d(f_hat, params.layer("fr.tfs.conv_in"), "valid"), config.elu_alpha)
    parts = []
    for s in config.scales()[1:]:
        if t % s:
            raise ConfigError(f"tfs: temporal length {t} not divisible by scale {s}")
        pooled = adaptive_avg_pool(fc, (1, t // s))
        parts.append(upsample_nearest(pooled, (1, s)))
    parts.append(fc)
    score = conv2d(concat_channels(parts), params.layer("fr.tfs.proj"), "valid")
    return reshape(score, (b, t))


def cfs_score(f_hat: Tensor, params: NetworkParams, config: NetworkConfig) -> Tensor:
    """Channel feature score, shape (B, P)."""
    p = f_hat.shape[1]
    g = config.channel_split_factor
    if p % g:
        raise ConfigError(f"cfs: {p} channels not divisible by gamma {g}")
    squeezed = global_avg_pool(f_hat)
    size = p // g
    groups = [
        relu(linear(slice_features(squeezed, i * size, (i + 1) * size), params.layer(f"fr.cfs.group{i}")))
        for i in range(g)
    ]
    h = relu(linear(concat_channels(groups), params.layer("fr.cfs.fc_x")))
    return linear(h, params.layer("fr.cfs.fc_y"))


def fuse_scores(s_tfs: Optional[Tensor], s_cfs: Optional[Tensor], channels: Optional[int] = None,
                length: Optional[int] = None) -> tuple[Tensor, Tensor]:
    """Pairwise softmax of the temporal and channel scores on the (P, T) grid.

    ``s_tfs`` (B, T) is tiled over channels and ``s_cfs`` (B, P) over time. A
    missing score is replaced by a constant zero score.
    """
    for name, s in (("S_tfs", s_tfs), ("S_cfs", s_cfs)):
        if s is not None and not np.all(np.isfinite(s.data)):
            raise InvalidInputError(f"score fusion: {name} contains non-finite values")
    if s_tfs is None and s_cfs is None:
        raise ConfigError("score fusion needs at least one score")
    b = (s_tfs if s_tfs is not None else s_cfs).shape[0]
    t = s_tfs.shape[1] if s_tfs is not None else length
    p = s_cfs.shape[1] if s_cfs is not None else channels
    if t is None or p is None:
        raise ConfigError("score fusion: grid extents unknown for the missing score")
    grid = (b, p, 1, t)
    a = broadcast_to(reshape(s_tfs, (b, 1, 1, t)), grid) if s_tfs is not None else Tensor(np.zeros(grid))
    c = broadcast_to(reshape(s_cfs, (b, p, 1, 1)), grid) if s_cfs is not None else Tensor(np.zeros(grid))
    return pair_softmax(a, c), pair_softmax(c, a)


def fr_forward(f_mfe: Tensor, params: NetworkParams, config: NetworkConfig,
               training: bool = False) -> tuple[Tensor, FrIntermediates]:
    _, _, use_tfs, use_cfs = config.switches
    F = elu(conv2d(f_mfe, params.layer("fr.mix"), "valid"), config.elu_alpha)
    F1 = conv2d(F, params.layer("fr.f1"), "same")
    F2 = conv2d(F, params.layer("fr.f2"), "valid")
    F_hat = F1 + F2
    if not (use_tfs or use_cfs):
        return F_hat, FrIntermediates(F, F1, F2, F_hat, None, None, None, None, None, None)
    s_tfs = tfs_score(F_hat, params, config) if use_tfs else None
    s_cfs = cfs_score(F_hat, params, config) if use_cfs else None
    w_tfs, w_cfs = fuse_scores(s_tfs, s_cfs, F_hat.shape[1], F_hat.shape[3])
    F1_hat = mul(w_tfs, F1)
    F2_hat = mul(w_cfs, F2)
    out = F1_hat + F2_hat
    return out, FrIntermediates(F, F1, F2, F_hat, s_tfs, s_cfs, w_tfs, w_cfs, F1_hat, F2_hat)


def prediction_forward(f: Tensor, params: NetworkParams, config: NetworkConfig, training: bool = False,
                       rng: Optional[np.random.Generator] = None) -> Tensor:
    h = batch_norm(f, params.layer("pred.bn"), training)
    h = elu(h, config.elu_alpha)
    h = separable_conv2d(h, params.layer("pred.sep.depthwise"), params.layer("pred.sep.pointwise"), "same")
    h = dropout(h, config.dropout_p, training, rng)
    return linear(global_avg_pool(h), params.layer("pred.fc"))


def forward_with_taps(x, params: NetworkParams, config: NetworkConfig, training: bool = False,
                      rng: Optional[np.random.Generator] = None,
                      ablation: Optional[str] = None) -> tuple[Tensor, dict[str, Tensor]]:
    """Run the network and return logits plus named intermediate feature maps."""
    if ablation is not None and ablation != config.ablation:
        if ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {ablation!r}; expected one of {sorted(ABLATIONS)}")
        config = config.with_updates(ablation=ablation)
    if training and config.dropout_p > 0 and rng is None:
        raise ConfigError("training-mode forward needs a seeded generator for dropout")
    use_mfe, use_fr, _, _ = config.switches
    x = as_input(x)
    taps: dict[str, Tensor] = {"input": x}
    h = stem_forward(x, params, config, training, rng)
    taps["stem"] = h
    if use_mfe:
        h = mfe_forward(h, params, config, training, rng)
        taps["mfe"] = h
    if use_fr:
        h, inter = fr_forward(h, params, config, training)
        taps.update({"fr.F": inter.F, "fr.F1": inter.F1, "fr.F2": inter.F2, "fr.F_hat": inter.F_hat})
        if inter.F1_hat is not None:
            taps["fr.F1_hat"] = inter.F1_hat
            taps["fr.F2_hat"] = inter.F2_hat
        taps["fr"] = h
    logits = prediction_forward(h, params, config, training, rng)
    return logits, taps


def forward(x, params: NetworkParams, config: NetworkConfig, training: bool = False,
            rng: Optional[np.random.Generator] = None, ablation: Optional[str] = None) -> Tensor:
    return forward_with_taps(x, params, config, training, rng, ablation)[0]


def predict_logits(trials: np.ndarray, params: NetworkParams, config: NetworkConfig,
                   batch_size: int = 128) -> np.ndarray:
    """Eval-mode logits for an (N, C, W) array, computed in batches without lineage."""
    params.set_requires_grad(False)
    out = [forward(trials[i:i + batch_size], params, config).data for i in range(0, len(trials), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, config.classes))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
