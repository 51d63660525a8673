"""Differentiable layer operations over :class:`Tensor`.

Every op computes its forward value with numpy (convolutions go through the
selected kernel backend) and registers a closure returning one gradient per
input. Only the layer set the feature-reweighting network needs is provided.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import ConfigError, GeometryError, InvalidInputError
from . import backend
from .tensor import Tensor, as_tensor, make_result

Padding = Union[str, tuple[int, int, int, int]]


@dataclass
class LayerParams:
    """Learnable tensors of one layer, plus batch-norm running statistics.

    For batch norm, ``weight`` is the per-channel scale and ``bias`` the shift.
    Running statistics are plain arrays updated in place in training mode.
    """

    weight: Tensor
    bias: Optional[Tensor] = None
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None
    momentum: float = 0.1
    eps: float = 1e-5
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# elementwise and structural helpers


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise GeometryError(f"add: shapes {a.shape} and {b.shape} differ")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product of equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise GeometryError(f"mul: shapes {a.shape} and {b.shape} differ")
    return make_result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    return make_result(a.data * c, (a,), lambda g: (g * c,), "scale")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Broadcast ``a`` (same rank, size-1 axes expanded) to ``shape``."""
    a = as_tensor(a)
    shape = tuple(shape)
    if a.ndim != len(shape):
        raise GeometryError(f"broadcast_to: rank {a.ndim} vs {len(shape)}")
    axes = tuple(i for i, (s, t) in enumerate(zip(a.shape, shape)) if s == 1 and t != 1)
    for s, t in zip(a.shape, shape):
        if s != t and s != 1:
            raise GeometryError(f"broadcast_to: cannot expand {a.shape} to {shape}")

    def backward(g):
        return (g.sum(axis=axes, keepdims=True),)

    return make_result(np.broadcast_to(a.data, shape).copy(), (a,), backward, "broadcast")


def slice_features(a: Tensor, start: int, stop: int) -> Tensor:
    """Take ``a[:, start:stop]`` of a 2-D (batch, features) tensor."""
    a = as_tensor(a)
    src = a.shape

    def backward(g):
        full = np.zeros(src)
        full[:, start:stop] = g
        return (full,)

    return make_result(a.data[:, start:stop].copy(), (a,), backward, "slice")


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return make_result(np.array(a.data.sum()), (a,), lambda g: (np.full(src, float(np.sum(g))),), "sum")


# ---------------------------------------------------------------------------
# convolutions


def _resolve_padding(padding: Padding, kh: int, kw: int) -> tuple[int, int, int, int]:
    if padding == "valid":
        return (0, 0, 0, 0)
    if padding == "same":
        th, tw = kh - 1, kw - 1
        return (th // 2, th - th // 2, tw // 2, tw - tw // 2)
    if isinstance(padding, tuple) and len(padding) == 4:
        return padding
    raise ConfigError(f"unknown padding {padding!r}")


def _grouped_conv(x: Tensor, w: Tensor, b: Optional[Tensor], padding: Padding,
                  stride: tuple[int, int], groups: int, op: str) -> Tensor:
    if x.ndim != 4 or w.ndim != 4:
        raise GeometryError(f"{op}: expected 4-D input and weight, got {x.shape} and {w.shape}")
    if 0 in x.shape:
        raise InvalidInputError(f"{op}: zero-sized axis in input {x.shape}")
    bsz, cin, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    if cin != cg * groups or cout % groups:
        raise GeometryError(f"{op}: input channels {cin} do not match weight {w.shape} with groups={groups}")
    if b is not None and b.shape != (cout,):
        raise GeometryError(f"{op}: bias shape {b.shape} != ({cout},)")
    pt, pb, pl, pr = _resolve_padding(padding, kh, kw)
    hp, wp = h + pt + pb, wd + pl + pr
    if kh > hp or kw > wp:
        raise GeometryError(f"{op}: kernel {kh}x{kw} exceeds padded input {hp}x{wp}")
    sh, sw = stride
    if (pt, pb, pl, pr) == (0, 0, 0, 0):
        xp = x.data
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    out = backend.conv_forward(xp, w.data, groups, sh, sw)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g):
        g = np.ascontiguousarray(g)
        gx = gw = gb = None
        if x.requires_grad:
            gxp = backend.conv_grad_input(g, w.data, groups, sh, sw, hp, wp)
            gx = gxp[:, :, pt:pt + h, pl:pl + wd]
        if w.requires_grad:
            gw = backend.conv_grad_weight(xp, g, groups, sh, sw, kh, kw)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return make_result(out, parents, backward, op)


def conv2d(x: Tensor, params: LayerParams, padding: Padding = "same",
           stride: tuple[int, int] = (1, 1)) -> Tensor:
    """Cross-correlation of ``x`` (B, Cin, H, W) with ``params.weight`` (Cout, Cin, kh, kw)."""
    return _grouped_conv(x, params.weight, params.bias, padding, stride, 1, "conv2d")


def depthwise_conv2d(x: Tensor, params: LayerParams, multiplier: int = 1,
                     padding: Padding = "same", stride: tuple[int, int] = (1, 1)) -> Tensor:
    """Per-channel convolution; output channel ``c*multiplier + d`` reads only input channel ``c``."""
    if multiplier < 1:
        raise ConfigError(f"depth multiplier must be >= 1, got {multiplier}")
    c = x.shape[1]
    w = params.weight
    if w.shape[0] != c * multiplier or w.shape[1] != 1:
        raise GeometryError(
            f"depthwise_conv2d: weight {w.shape} does not hold {multiplier} kernels for each of {c} channels")
    return _grouped_conv(x, w, params.bias, padding, stride, c, "depthwise_conv2d")


def separable_conv2d(x: Tensor, depthwise: LayerParams, pointwise: LayerParams,
                     padding: Padding = "same") -> Tensor:
    if pointwise.weight.shape[2:] != (1, 1):
        raise GeometryError(f"separable_conv2d: pointwise kernel must be 1x1, got {pointwise.weight.shape}")
    if pointwise.weight.shape[1] != depthwise.weight.shape[0]:
        raise GeometryError(
            f"separable_conv2d: pointwise expects {pointwise.weight.shape[1]} channels, "
            f"depthwise yields {depthwise.weight.shape[0]}")
    multiplier = depthwise.weight.shape[0] // x.shape[1] if x.shape[1] else 0
    h = depthwise_conv2d(x, depthwise, multiplier, padding)
    return conv2d(h, pointwise, "valid")


# ---------------------------------------------------------------------------
# normalisation, activations, regularisation


def batch_norm(x: Tensor, params: LayerParams, training: bool) -> Tensor:
    """Per-channel batch norm over (B, H, W).

    Train mode normalises with the biased batch variance and blends the batch
    statistics into the running ones with ``params.momentum``. Eval mode uses
    the running statistics, which start at mean 0 / var 1.
    """
    if x.ndim != 4:
        raise GeometryError(f"batch_norm: expected 4-D input, got {x.shape}")
    c = x.shape[1]
    gamma, beta = params.weight, params.bias
    if gamma.shape != (c,) or beta is None or beta.shape != (c,):
        raise GeometryError(f"batch_norm: scale/shift do not match {c} channels")
    if params.running_mean is None:
        params.running_mean = np.zeros(c)
        params.running_var = np.ones(c)
    eps = params.eps
    g_ = gamma.data[None, :, None, None]
    b_ = beta.data[None, :, None, None]

    if training:
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 1:
            raise InvalidInputError("batch_norm: empty batch in training mode")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        m = params.momentum
        params.running_mean *= 1.0 - m
        params.running_mean += m * mean
        params.running_var *= 1.0 - m
        params.running_var += m * var
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = xhat * g_ + b_

        def backward(g):
            dshift = g.sum(axis=(0, 2, 3))
            dscale = np.einsum("bchw,bchw->c", g, xhat)
            k = (gamma.data * inv_std)[None, :, None, None]
            dx = k * (g - (dshift / n)[None, :, None, None] - xhat * (dscale / n)[None, :, None, None])
            return dx, dscale, dshift
    else:
        inv_std = 1.0 / np.sqrt(params.running_var + eps)
        xhat = (x.data - params.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = xhat * g_ + b_

        def backward(g):
            return g * g_ * inv_std[None, :, None, None], (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_result(out, (x, gamma, beta), backward, "batch_norm")


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    neg = x.data <= 0
    em1 = np.expm1(np.minimum(x.data, 0.0))
    out = np.where(neg, alpha * em1, x.data)

    def backward(g):
        return (g * np.where(neg, alpha * (em1 + 1.0), 1.0),)

    return make_result(out, (x,), backward, "elu")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return make_result(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def activation(x: Tensor, kind: str, alpha: float = 1.0) -> Tensor:
    if kind == "elu":
        return elu(x, alpha)
    if kind == "relu":
        return relu(x)
    raise ConfigError(f"unknown activation {kind!r}")


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval mode is the identity."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a seeded generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_result(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


# ---------------------------------------------------------------------------
# pooling and resampling


def _bin_matrix(length: int, target: int) -> np.ndarray:
    """Averaging matrix (target, length): bin j spans floor(j*L/T) .. ceil((j+1)*L/T) - 1."""
    a = np.zeros((target, length))
    for j in range(target):
        start = (j * length) // target
        stop = -((-(j + 1) * length) // target)
        a[j, start:stop] = 1.0 / (stop - start)
    return a


def adaptive_avg_pool(x: Tensor, target: tuple[int, int]) -> Tensor:
    """Adaptive mean pooling of the two trailing axes of a 4-D tensor to ``target``."""
    if x.ndim != 4:
        raise GeometryError(f"adaptive_avg_pool: expected 4-D input, got {x.shape}")
    h, w = x.shape[2:]
    th, tw = target
    if th < 1 or tw < 1:
        raise ConfigError(f"adaptive_avg_pool: target extents must be >= 1, got {target}")
    if th > h or tw > w:
        raise ConfigError(f"adaptive_avg_pool: target {target} exceeds input extents {(h, w)}")
    if (th, tw) == (h, w):
        return x
    ah, aw = _bin_matrix(h, th), _bin_matrix(w, tw)
    out = np.einsum("bchw,ih,jw->bcij", x.data, ah, aw, optimize=True)

    def backward(g):
        return (np.einsum("bcij,ih,jw->bchw", g, ah, aw, optimize=True),)

    return make_result(out, (x,), backward, "adaptive_avg_pool")


def upsample_nearest(x: Tensor, scale_hw: tuple[int, int]) -> Tensor:
    if x.ndim != 4:
        raise GeometryError(f"upsample_nearest: expected 4-D input, got {x.shape}")
    sh, sw = scale_hw
    if sh < 1 or sw < 1:
        raise ConfigError(f"upsample scale must be >= 1, got {scale_hw}")
    if (sh, sw) == (1, 1):
        return x
    out = np.repeat(np.repeat(x.data, sh, axis=2), sw, axis=3)
    b, c, h, w = x.shape

    def backward(g):
        return (g.reshape(b, c, h, sh, w, sw).sum(axis=(3, 5)),)

    return make_result(out, (x,), backward, "upsample_nearest")


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: (B, C, H, W) -> (B, C)."""
    if x.ndim != 4:
        raise GeometryError(f"global_avg_pool: expected 4-D input, got {x.shape}")
    b, c, h, w = x.shape
    if h * w < 1:
        raise InvalidInputError("global_avg_pool: empty spatial extent")

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)

    return make_result(x.data.mean(axis=(2, 3)), (x,), backward, "global_avg_pool")


# ---------------------------------------------------------------------------
# dense layers and combinators


def linear(x: Tensor, params: LayerParams) -> Tensor:
    """y = x W^T + b for x of shape (B, n) and W of shape (m, n)."""
    w, b = params.weight, params.bias
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise GeometryError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def backward(g):
        gx = g @ w.data if x.requires_grad else None
        gw = g.T @ x.data if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    parents = (x, w, b) if b is not None else (x, w)
    return make_result(out, parents, backward, "linear")


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if not inputs:
        raise GeometryError("concat_channels: no inputs")
    if len(inputs) == 1:
        return inputs[0]
    ref = inputs[0].shape
    for t in inputs[1:]:
        if t.ndim != len(ref) or t.shape[:1] + t.shape[2:] != ref[:1] + ref[2:]:
            raise GeometryError(f"concat_channels: {t.shape} does not match {ref} outside the channel axis")
    bounds = np.cumsum([0] + [t.shape[1] for t in inputs])
    out = np.concatenate([t.data for t in inputs], axis=1)

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(inputs)))

    return make_result(out, tuple(inputs), backward, "concat")


def pair_softmax(a: Tensor, b: Tensor) -> Tensor:
    """exp(a) / (exp(a) + exp(b)) elementwise, stabilised by the pairwise max."""
    if a.shape != b.shape:
        raise GeometryError(f"pair_softmax: shapes {a.shape} and {b.shape} differ")
    m = np.maximum(a.data, b.data)
    ea = np.exp(a.data - m)
    eb = np.exp(b.data - m)
    s = ea / (ea + eb)

    def backward(g):
        d = g * s * (1.0 - s)
        return d, -d

    return make_result(s, (a, b), backward, "pair_softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise GeometryError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n, m = logits.shape
    if n == 0:
        raise InvalidInputError("cross_entropy: empty batch")
    if labels.min() < 0 or labels.max() >= m:
        raise InvalidInputError(f"cross_entropy: labels must lie in [0, {m})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))

    def backward(g):
        p = np.exp(z - logsum[:, None])
        p[rows, labels] -= 1.0
        return (p * (float(np.sum(g)) / n),)

    return make_result(np.array(loss), (logits,), backward, "cross_entropy")
