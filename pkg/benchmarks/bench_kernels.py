"""Compiled vs numpy convolution kernels on the layer shapes of the desk network.

    python3 benchmarks/bench_kernels.py [--repeat N] [--batch B] [--epoch]

Times forward, weight-gradient and input-gradient kernels of each backend on
the shapes one training batch produces (C=8, W=256), checks that the two
backends agree, and with ``--epoch`` also times a full training epoch under
each ``FRNET_BACKEND`` setting in a subprocess.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from frnet.kernels import backend

EPOCH_SNIPPET = """
import time
from frnet.data import SynthSpec, synthesize
from frnet.network import NetworkConfig
from frnet.training import TrainConfig, fit_fold
ds = synthesize(SynthSpec())
net = NetworkConfig(electrodes=8, trial_length=256, classes=4)
fit_fold(ds.subset(range(102)), ds.subset(range(102, 128)), net, TrainConfig(epochs=1))
t = time.perf_counter()
fit_fold(ds.subset(range(102)), ds.subset(range(102, 128)), net, TrainConfig(epochs=3))
print((time.perf_counter() - t) / 3)
"""


def layer_shapes(batch):
    # name, padded input shape, weight shape, groups
    return [
        ("stem temporal 1x64", (batch, 1, 8, 319), (8, 1, 1, 64), 1),
        ("stem depthwise 8x1", (batch, 8, 8, 256), (16, 1, 8, 1), 8),
        ("mfe depthwise 1x9", (batch, 8, 1, 72), (8, 1, 1, 9), 8),
        ("fr dense 1x3", (batch, 32, 1, 66), (32, 32, 1, 3), 1),
        ("pred depthwise 1x16", (batch, 32, 1, 79), (32, 1, 1, 16), 32),
    ]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_layer(impl, xp, w, groups, repeat):
    kh, kw = w.shape[2:]
    out = impl.conv_forward(xp, w, groups, 1, 1)
    g = np.ones_like(out)
    return (
        best_of(lambda: impl.conv_forward(xp, w, groups, 1, 1), repeat),
        best_of(lambda: impl.conv_grad_weight(xp, g, groups, 1, 1, kh, kw), repeat),
        best_of(lambda: impl.conv_grad_input(g, w, groups, 1, 1, xp.shape[2], xp.shape[3]), repeat),
    ), out


def epoch_time(name):
    env = dict(os.environ, FRNET_BACKEND=name)
    res = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(res.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--epoch", action="store_true", help="also time a training epoch per backend")
    args = ap.parse_args()

    if "cython" not in backend.BACKENDS:
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    print(f"{'layer':<22}{'kernel':<9}{'python ms':>11}{'cython ms':>11}{'speedup':>9}")
    for name, xshape, wshape, groups in layer_shapes(args.batch):
        xp = rng.standard_normal(xshape)
        w = rng.standard_normal(wshape)
        t_py, out_py = bench_layer(backend.BACKENDS["python"], xp, w, groups, args.repeat)
        t_c, out_c = bench_layer(backend.BACKENDS["cython"], xp, w, groups, args.repeat)
        err = np.abs(out_py - out_c).max() / np.abs(out_py).max()
        if err > 1e-12:
            sys.exit(f"{name}: backends disagree (relative difference {err:.2e})")
        for kind, a, b in zip(("forward", "grad_w", "grad_x"), t_py, t_c):
            print(f"{name:<22}{kind:<9}{1e3 * a:>11.2f}{1e3 * b:>11.2f}{a / b:>8.1f}x")
    print(f"dispatch: dense kernels with <= {backend.DENSE_BLAS_MAX_TAPS} taps use BLAS under the cython backend")

    if args.epoch:
        t_py, t_c = epoch_time("python"), epoch_time("cython")
        print(f"training epoch (102 trials): python {t_py:.3f} s, cython {t_c:.3f} s, {t_py / t_c:.1f}x")


if __name__ == "__main__":
    main()
