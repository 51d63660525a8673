"""Named parameter layout of the network and the container holding it."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..kernels import LayerParams, Tensor
from .config import NetworkConfig


@dataclass(frozen=True)
class ParamSpec:
    shape: tuple[int, ...]
    kind: str  # "weight", "bias", "bn_scale", "bn_shift"


def layer_specs(config: NetworkConfig) -> dict[str, ParamSpec]:
    """Every learnable tensor the configured variant uses, keyed by a stable name."""
    use_mfe, use_fr, use_tfs, use_cfs = config.switches
    specs: dict[str, ParamSpec] = {}

    def conv(name, cout, cin, kh, kw, bias=True):
        specs[f"{name}.weight"] = ParamSpec((cout, cin, kh, kw), "weight")
        if bias:
            specs[f"{name}.bias"] = ParamSpec((cout,), "bias")

    def dense(name, m, n):
        specs[f"{name}.weight"] = ParamSpec((m, n), "weight")
        specs[f"{name}.bias"] = ParamSpec((m,), "bias")

    def bn(name, c):
        specs[f"{name}.weight"] = ParamSpec((c,), "bn_scale")
        specs[f"{name}.bias"] = ParamSpec((c,), "bn_shift")

    f1, d, c = config.stem_filters, config.stem_depth_multiplier, config.electrodes
    conv("stem.conv", f1, 1, 1, config.stem_temporal_kernel, bias=False)
    bn("stem.bn", f1)
    conv("stem.dconv", f1 * d, 1, c, 1)
    channels = config.stem_channels

    if use_mfe:
        fb = config.mfe_filters_per_branch
        for i, k in enumerate(config.mfe_branch_kernels):
            conv(f"mfe.branch{i}.reduce", fb, channels, 1, 1)
            conv(f"mfe.branch{i}.dconv1", fb, 1, 1, k)
            conv(f"mfe.branch{i}.dconv2", fb, 1, 1, k)
        if config.mfe_pool_branch:
            conv("mfe.pool.proj", fb, channels, 1, 1)
        channels = config.mfe_channels

    if use_fr:
        p = config.fr_channels
        conv("fr.mix", p, channels, 1, 1)
        conv("fr.f1", p, p, 1, 3)
        conv("fr.f2", p, p, 1, 1)
        if use_tfs:
            conv("fr.tfs.conv_in", p, p, 1, 1)
            conv("fr.tfs.proj", 1, p * config.temporal_scale_factor, 1, 1)
        if use_cfs:
            g = config.channel_split_factor
            s = p // g
            for i in range(g):
                dense(f"fr.cfs.group{i}", s // 2, s)
            dense("fr.cfs.fc_x", p, g * (s // 2))
            dense("fr.cfs.fc_y", p, p)
        channels = p

    bn("pred.bn", channels)
    conv("pred.sep.depthwise", channels, 1, 1, config.pred_kernel, bias=False)
    conv("pred.sep.pointwise", config.pred_filters, channels, 1, 1)
    dense("pred.fc", config.classes, config.pred_filters)
    return specs


def batch_norm_layers(config: NetworkConfig) -> list[str]:
    return sorted({n.rsplit(".", 1)[0] for n, s in layer_specs(config).items() if s.kind == "bn_scale"})


class NetworkParams:
    """Trainable tensors plus batch-norm running statistics, addressed by name."""

    def __init__(self, tensors: dict[str, Tensor], buffers: dict[str, np.ndarray],
                 momentum: float = 0.1, eps: float = 1e-5):
        self.tensors = dict(tensors)
        self.buffers = dict(buffers)
        self.momentum = momentum
        self.eps = eps

    @classmethod
    def from_arrays(cls, config: NetworkConfig, arrays: dict[str, np.ndarray]) -> "NetworkParams":
        specs = layer_specs(config)
        tensors = {n: Tensor(np.array(arrays[n], dtype=np.float64)) for n in specs}
        buffers = {}
        for layer in batch_norm_layers(config):
            c = specs[f"{layer}.weight"].shape[0]
            buffers[f"{layer}.running_mean"] = np.array(arrays.get(f"{layer}.running_mean", np.zeros(c)), dtype=np.float64)
            buffers[f"{layer}.running_var"] = np.array(arrays.get(f"{layer}.running_var", np.ones(c)), dtype=np.float64)
        return cls(tensors, buffers, config.bn_momentum, config.bn_eps)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.tensors))

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def layer(self, prefix: str) -> LayerParams:
        bias: Optional[Tensor] = self.tensors.get(f"{prefix}.bias")
        return LayerParams(
            weight=self.tensors[f"{prefix}.weight"],
            bias=bias,
            running_mean=self.buffers.get(f"{prefix}.running_mean"),
            running_var=self.buffers.get(f"{prefix}.running_var"),
            momentum=self.momentum,
            eps=self.eps,
        )

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        """Every tensor and buffer as a plain array (shared, not copied)."""
        out = {n: t.data for n, t in self.tensors.items()}
        out.update(self.buffers)
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            {n: Tensor(t.data.copy()) for n, t in self.tensors.items()},
            {n: b.copy() for n, b in self.buffers.items()},
            self.momentum,
            self.eps,
        )

    def with_tensors(self, replacements: dict[str, Tensor]) -> "NetworkParams":
        """Same buffers (copied), with some trainable tensors swapped out."""
        tensors = dict(self.tensors)
        tensors.update(replacements)
        return NetworkParams(tensors, {n: b.copy() for n, b in self.buffers.items()}, self.momentum, self.eps)
