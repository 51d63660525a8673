"""Finite-difference check of every kernel op and of the assembled network.

Each case builds small random inputs, runs :func:`grad_check` and reports the
worst relative error. Used by the ``gradcheck`` subcommand and the tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import (
    LayerParams,
    Tensor,
    adaptive_avg_pool,
    add,
    batch_norm,
    broadcast_to,
    concat_channels,
    conv2d,
    cross_entropy,
    depthwise_conv2d,
    dropout,
    elu,
    global_avg_pool,
    grad_check,
    linear,
    mul,
    pair_softmax,
    relu,
    reshape,
    separable_conv2d,
    slice_features,
    sum_all,
    upsample_nearest,
)
from .network import (
    NetworkConfig,
    cfs_score,
    forward,
    fr_forward,
    mfe_forward,
    prediction_forward,
    stem_forward,
    tfs_score,
)

TOLERANCE = 1e-4
STEP = 1e-5

# small but complete network: every module and both score paths are exercised
SUITE_NETWORK = NetworkConfig(
    electrodes=3, trial_length=32, classes=3, stem_filters=2, stem_temporal_kernel=5,
    stem_depth_multiplier=2, mfe_branch_kernels=(3, 5), mfe_filters_per_branch=2, fr_channels=8,
    pred_filters=4, pred_kernel=3, dropout_p=0.0,
)


@dataclass
class SuiteRow:
    name: str
    max_error: float
    passed: bool
    seconds: float


def _bn_params(rng, c):
    return [rng.uniform(0.5, 1.5, c), rng.normal(size=c)]


def _cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[np.ndarray]]]:
    n = rng.normal
    cfg = SUITE_NETWORK
    from .training import xavier_init

    params = xavier_init(cfg, int(rng.integers(2**31)))
    labels = np.arange(4) % cfg.classes
    trials = n(size=(4, cfg.electrodes, cfg.trial_length))

    def bn(train):
        def fn(x, g, b):
            lp = LayerParams(g, b, np.zeros(x.shape[1]), np.ones(x.shape[1]) * 1.3)
            return batch_norm(x, lp, train)
        return fn

    def network_case(prefixes, build):
        names = [k for k in params.names() if k.startswith(prefixes)]

        def fn(*ts):
            q = params.with_tensors(dict(zip(names, ts[1:])))
            return build(ts[0], q)

        return fn, names

    cases = {
        "add": (lambda a, b: add(a, b), [n(size=(2, 3)), n(size=(2, 3))]),
        "mul": (lambda a, b: mul(a, b), [n(size=(2, 3)), n(size=(2, 3))]),
        "broadcast_to": (lambda a: broadcast_to(a, (2, 3, 1, 5)), [n(size=(2, 1, 1, 5))]),
        "reshape": (lambda a: reshape(a, (3, 4)), [n(size=(2, 6))]),
        "slice_features": (lambda a: slice_features(a, 1, 3), [n(size=(2, 5))]),
        "sum_all": (lambda a: sum_all(a), [n(size=(2, 3))]),
        "conv2d": (lambda x, w, b: conv2d(x, LayerParams(w, b), "same"),
                   [n(size=(2, 3, 4, 9)), n(size=(4, 3, 2, 5)), n(size=4)]),
        "conv2d_strided_valid": (lambda x, w: conv2d(x, LayerParams(w), "valid", (1, 2)),
                                 [n(size=(2, 2, 3, 11)), n(size=(3, 2, 2, 3))]),
        "depthwise_conv2d": (lambda x, w, b: depthwise_conv2d(x, LayerParams(w, b), 2, "same"),
                             [n(size=(2, 3, 2, 10)), n(size=(6, 1, 1, 4)), n(size=6)]),
        "separable_conv2d": (lambda x, wd, wp, bp: separable_conv2d(x, LayerParams(wd), LayerParams(wp, bp)),
                             [n(size=(2, 3, 1, 10)), n(size=(3, 1, 1, 3)), n(size=(4, 3, 1, 1)), n(size=4)]),
        "batch_norm_train": (bn(True), [n(size=(4, 3, 1, 6)), *_bn_params(rng, 3)]),
        "batch_norm_eval": (bn(False), [n(size=(4, 3, 1, 6)), *_bn_params(rng, 3)]),
        "elu": (lambda a: elu(a, 1.0), [n(size=(3, 7))]),
        "relu": (lambda a: relu(a), [n(size=(3, 7))]),
        "dropout": (lambda a: dropout(a, 0.3, True, np.random.default_rng(5)), [n(size=(3, 7))]),
        "adaptive_avg_pool": (lambda a: adaptive_avg_pool(a, (1, 3)), [n(size=(2, 2, 1, 7))]),
        "upsample_nearest": (lambda a: upsample_nearest(a, (1, 3)), [n(size=(2, 2, 1, 4))]),
        "global_avg_pool": (lambda a: global_avg_pool(a), [n(size=(2, 3, 2, 5))]),
        "linear": (lambda x, w, b: linear(x, LayerParams(w, b)), [n(size=(4, 5)), n(size=(3, 5)), n(size=3)]),
        "concat_channels": (lambda a, b: concat_channels([a, b]), [n(size=(2, 2, 1, 3)), n(size=(2, 3, 1, 3))]),
        "pair_softmax": (lambda a, b: pair_softmax(a, b), [n(size=(3, 4)), n(size=(3, 4))]),
        "cross_entropy": (lambda z: cross_entropy(z, labels), [n(size=(4, cfg.classes))]),
    }

    t = cfg.stem_pool
    f_mfe = n(size=(2, cfg.mfe_channels, 1, t))
    f_hat = n(size=(2, cfg.fr_channels, 1, t))
    for name, prefixes, x, build in [
        ("stem_forward", ("stem.",), trials[:, None], lambda x, q: stem_forward(x, q, cfg, True)),
        ("mfe_forward", ("mfe.",), n(size=(2, cfg.stem_channels, 1, t)), lambda x, q: mfe_forward(x, q, cfg)),
        ("tfs_score", ("fr.tfs.",), f_hat, lambda x, q: tfs_score(x, q, cfg)),
        ("cfs_score", ("fr.cfs.",), f_hat, lambda x, q: cfs_score(x, q, cfg)),
        ("fr_forward", ("fr.",), f_mfe, lambda x, q: fr_forward(x, q, cfg)[0]),
        ("prediction_forward", ("pred.",), n(size=(4, cfg.fr_channels, 1, t)),
         lambda x, q: prediction_forward(x, q, cfg, True)),
    ]:
        fn, names = network_case(prefixes, build)
        cases[name] = (fn, [x] + [params[k].data.copy() for k in names])

    names = params.names()

    def full(*ts):
        q = params.with_tensors(dict(zip(names, ts)))
        return cross_entropy(forward(trials, q, cfg, training=True), labels)

    cases["network"] = (full, [params[k].data.copy() for k in names])
    return cases


def run_suite(seed: int = 0, only: list[str] | None = None) -> list[SuiteRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for name, (fn, arrays) in _cases(rng).items():
        if only is not None and name not in only:
            continue
        start = time.perf_counter()
        report = grad_check(fn, [Tensor(a) for a in arrays], TOLERANCE, STEP, seed=seed)
        rows.append(SuiteRow(name, report.max_error, report.passed, time.perf_counter() - start))
    return rows


def format_table(rows: list[SuiteRow]) -> str:
    lines = [f"{'op':<24}{'max rel error':>15}  result"]
    for r in rows:
        lines.append(f"{r.name:<24}{r.max_error:>15.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
