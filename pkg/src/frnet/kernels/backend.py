"""Selects the convolution kernel implementation at import time.

The compiled extension is preferred. Setting ``FRNET_BACKEND=python`` forces
the numpy fallback, which is also used whenever the extension was not built.

With the compiled backend, dense convolutions with small kernels still go
through im2col + BLAS: a matmul beats the direct loops there. Grouped,
depthwise and wide-kernel convolutions run in the compiled loops.
"""
import logging
import os

from . import _conv_py

log = logging.getLogger(__name__)

# dense kernels with at most this many taps use BLAS even when compiled
DENSE_BLAS_MAX_TAPS = 7

try:
    from . import _conv_c
except ImportError:
    _conv_c = None

_forced = os.environ.get("FRNET_BACKEND", "").strip().lower()
if _forced == "cython" and _conv_c is None:
    raise ImportError("FRNET_BACKEND=cython but the compiled extension is not built")
if _forced not in ("", "python", "cython"):
    raise ImportError(f"FRNET_BACKEND must be 'python' or 'cython', got {_forced!r}")

if _forced == "python" or _conv_c is None:
    if _conv_c is None and _forced != "python":
        log.debug("compiled conv kernels unavailable, using numpy fallback")
    NAME = "python"
else:
    NAME = "cython"


def _use_blas(groups, kh, kw):
    return NAME == "python" or (groups == 1 and kh * kw <= DENSE_BLAS_MAX_TAPS)


def conv_forward(xp, w, groups, sh, sw):
    if _use_blas(groups, w.shape[2], w.shape[3]):
        return _conv_py.conv_forward(xp, w, groups, sh, sw)
    return _conv_c.conv_forward(xp, w, groups, sh, sw)


def conv_grad_weight(xp, gout, groups, sh, sw, kh, kw):
    if _use_blas(groups, kh, kw):
        return _conv_py.conv_grad_weight(xp, gout, groups, sh, sw, kh, kw)
    return _conv_c.conv_grad_weight(xp, gout, groups, sh, sw, kh, kw)


def conv_grad_input(gout, w, groups, sh, sw, hp, wp):
    if _use_blas(groups, w.shape[2], w.shape[3]):
        return _conv_py.conv_grad_input(gout, w, groups, sh, sw, hp, wp)
    return _conv_c.conv_grad_input(gout, w, groups, sh, sw, hp, wp)


BACKENDS = {"python": _conv_py}
if _conv_c is not None:
    BACKENDS["cython"] = _conv_c
