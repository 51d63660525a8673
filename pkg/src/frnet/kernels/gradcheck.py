"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float
    attempts: int = 1
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> float:
    # normalised by the gradient's own scale so near-zero entries do not blow up
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / denom)


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tolerance: float = 1e-4,
    h: float = 1e-5,
    names: Optional[Sequence[str]] = None,
    max_coords: Optional[int] = None,
    seed: int = 0,
    retries: int = 3,
    scale_floor: float = 1e-6,
) -> GradCheckReport:
    """Compare backprop gradients of ``fn`` with central differences.

    ``fn`` maps the input tensors to an output of any shape; it is contracted
    with a fixed random projection to a scalar. For each input the reported
    error is ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``.
    With ``max_coords`` only that many randomly chosen coordinates per input
    are differenced. ``fn`` must be deterministic (re-seed any dropout inside).

    A failing check is retried on slightly perturbed inputs, since sampling a
    kink (ReLU at 0) breaks finite differences without indicating a bug.
    """
    rng = np.random.default_rng(seed)
    names = list(names) if names is not None else [f"input{i}" for i in range(len(inputs))]
    base = [np.array(t.data, dtype=np.float64) for t in inputs]

    report = None
    for attempt in range(retries + 1):
        if attempt:
            base = [b + 1e-3 * rng.standard_normal(b.shape) for b in base]
        report = _check_once(fn, base, tolerance, h, names, max_coords, rng, scale_floor)
        report.attempts = attempt + 1
        if report.passed:
            break
    return report


def _check_once(fn, base, tolerance, h, names, max_coords, rng, scale_floor):
    tensors = [Tensor(b.copy(), requires_grad=True) for b in base]
    out = fn(*tensors)
    proj = rng.standard_normal(out.shape)
    out.backward(proj)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    plain = [Tensor(b.copy()) for b in base]

    def value() -> float:
        return float(np.sum(fn(*plain).data * proj))

    errors, checked = {}, {}
    for idx, (t, name) in enumerate(zip(plain, names)):
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(coords.size)
        for k, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + h
            up = value()
            flat[i] = orig - h
            down = value()
            flat[i] = orig
            numeric[k] = (up - down) / (2.0 * h)
        a = analytic[idx].reshape(-1)[coords]
        errors[name] = _relative_error(a, numeric, scale_floor)
        checked[name] = int(coords.size)
    return GradCheckReport(errors=errors, tolerance=tolerance, checked=checked)
