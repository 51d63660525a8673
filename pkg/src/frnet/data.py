"""EEG trial container, the EEGB file format, normalisation and synthetic trials.

EEGB layout (little-endian)::

    b"EEGB" | u32 version=1 | u32 N | u32 C | u32 W | u32 M | f32 sampling_rate
    N*C*W float32 (trial-major, then channel, then time) | N u16 labels

Trials are held as float64 in memory and stored as float32 on disk.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ContentError, FormatError, InvalidInputError, LengthError

EEGB_MAGIC = b"EEGB"
EEGB_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIf")


@dataclass
class TrialSet:
    trials: np.ndarray
    labels: np.ndarray
    classes: int
    sampling_rate: float = 250.0
    class_names: list[str] = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        self.trials = np.asarray(self.trials, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.trials.ndim != 3:
            raise InvalidInputError(f"trials must be (N, C, W), got shape {self.trials.shape}")
        if self.labels.shape != (self.trials.shape[0],):
            raise InvalidInputError(f"{self.labels.size} labels for {self.trials.shape[0]} trials")
        if self.classes < 1:
            raise InvalidInputError("classes must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise InvalidInputError(f"labels must lie in [0, {self.classes})")
        if not np.all(np.isfinite(self.trials)):
            raise InvalidInputError("trials contain NaN or Inf")
        if not self.class_names:
            self.class_names = [f"class{k}" for k in range(self.classes)]

    def __len__(self) -> int:
        return self.trials.shape[0]

    @property
    def channels(self) -> int:
        return self.trials.shape[1]

    @property
    def length(self) -> int:
        return self.trials.shape[2]

    def subset(self, indices: Sequence[int]) -> "TrialSet":
        idx = np.asarray(indices, dtype=np.int64)
        return TrialSet(self.trials[idx], self.labels[idx], self.classes, self.sampling_rate,
                        list(self.class_names), self.provenance)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.classes)


# ---------------------------------------------------------------------------
# EEGB


def eegb_bytes(ts: TrialSet) -> bytes:
    n, c, w = ts.trials.shape
    if ts.classes > 0xFFFF:
        raise ContentError("EEGB stores labels as u16; too many classes")
    header = _HEADER.pack(EEGB_MAGIC, EEGB_VERSION, n, c, w, ts.classes, ts.sampling_rate)
    return header + ts.trials.astype("<f4").tobytes() + ts.labels.astype("<u2").tobytes()


def parse_eegb(buf: bytes, provenance: str = "") -> TrialSet:
    if len(buf) < _HEADER.size:
        raise LengthError(f"EEGB header needs {_HEADER.size} bytes, got {len(buf)}")
    magic, version, n, c, w, m, fs = _HEADER.unpack_from(buf, 0)
    if magic != EEGB_MAGIC:
        raise FormatError(f"bad EEGB magic {magic!r}")
    if version != EEGB_VERSION:
        raise FormatError(f"unsupported EEGB version {version}")
    n_values = n * c * w
    expected = _HEADER.size + 4 * n_values + 2 * n
    if len(buf) != expected:
        raise LengthError(f"EEGB payload is {len(buf)} bytes, header implies {expected}")
    trials = np.frombuffer(buf, dtype="<f4", count=n_values, offset=_HEADER.size).reshape(n, c, w)
    labels = np.frombuffer(buf, dtype="<u2", count=n, offset=_HEADER.size + 4 * n_values)
    if n and int(labels.max()) >= m:
        raise ContentError(f"label {int(labels.max())} out of range for {m} classes")
    if not np.all(np.isfinite(trials)):
        raise ContentError("EEGB trials contain NaN or Inf")
    return TrialSet(trials.astype(np.float64), labels.astype(np.int64), int(m), float(fs), provenance=provenance)


def save_eegb(ts: TrialSet, path: Union[str, Path]) -> None:
    Path(path).write_bytes(eegb_bytes(ts))


def load_eegb(path: Union[str, Path]) -> TrialSet:
    path = Path(path)
    return parse_eegb(path.read_bytes(), provenance=str(path))


# ---------------------------------------------------------------------------
# normalisation


def minmax_normalize(ts: TrialSet) -> TrialSet:
    """Map every channel of every trial affinely onto [0, 1].

    A constant channel has no range; it becomes 0.5 everywhere and a warning
    is issued.
    """
    lo = ts.trials.min(axis=2, keepdims=True)
    hi = ts.trials.max(axis=2, keepdims=True)
    span = hi - lo
    flat = span == 0
    if np.any(flat):
        warnings.warn(f"{int(flat.sum())} constant channel(s) mapped to 0.5", RuntimeWarning, stacklevel=2)
    out = np.where(flat, 0.5, (ts.trials - lo) / np.where(flat, 1.0, span))
    return TrialSet(out, ts.labels.copy(), ts.classes, ts.sampling_rate, list(ts.class_names),
                    ts.provenance + ("|minmax" if ts.provenance else "minmax"))


# ---------------------------------------------------------------------------
# synthetic trials


@dataclass
class SynthSpec:
    """Recipe for a synthetic EEG set with known class signatures.

    Class ``k`` carries a sinusoid at ``frequencies[k]`` Hz on the electrodes in
    ``channel_subsets[k]`` inside ``window`` (sample indices, end exclusive);
    white Gaussian noise covers every channel and sample.
    """

    classes: int = 4
    trials_per_class: int = 40
    channels: int = 8
    length: int = 256
    sampling_rate: float = 128.0
    frequencies: Optional[list[float]] = None
    channel_subsets: Optional[list[list[int]]] = None
    window: Optional[tuple[int, int]] = None
    amplitude: float = 1.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.frequencies is None:
            self.frequencies = [6.0 + 5.0 * k for k in range(self.classes)]
        if self.channel_subsets is None:
            self.channel_subsets = [sorted({(2 * k) % self.channels, (2 * k + 1) % self.channels})
                                    for k in range(self.classes)]
        if self.window is None:
            self.window = (self.length // 4, self.length // 2)
        self.frequencies = [float(f) for f in self.frequencies]
        self.channel_subsets = [sorted(int(c) for c in s) for s in self.channel_subsets]
        self.window = (int(self.window[0]), int(self.window[1]))
        self.validate()

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"synth.{key}: {msg}")

        need(self.classes >= 1, "classes", "must be >= 1")
        need(self.trials_per_class >= 1, "trials_per_class", "must be >= 1")
        need(self.channels >= 1 and self.length >= 1, "channels", "channels and length must be >= 1")
        need(len(self.frequencies) == self.classes, "frequencies", "need one carrier per class")
        need(len(self.channel_subsets) == self.classes, "channel_subsets", "need one subset per class")
        nyquist = self.sampling_rate / 2.0
        need(all(0 < f < nyquist for f in self.frequencies), "frequencies", f"carriers must lie in (0, {nyquist}) Hz")
        need(all(s and all(0 <= c < self.channels for c in s) for s in self.channel_subsets), "channel_subsets",
             f"electrode indices must lie in [0, {self.channels})")
        start, stop = self.window
        need(0 <= start < stop <= self.length, "window", f"({start}, {stop}) not inside [0, {self.length})")
        sigs = {(f, tuple(s)) for f, s in zip(self.frequencies, self.channel_subsets)}
        need(len(sigs) == self.classes, "frequencies", "classes need distinct (frequency, channel subset) signatures")
        need(self.noise_sigma >= 0, "noise_sigma", "must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"synth.{unknown[0]}: unknown key")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def synthesize(spec: SynthSpec) -> TrialSet:
    rng = np.random.default_rng(spec.seed)
    n = spec.classes * spec.trials_per_class
    labels = rng.permutation(np.repeat(np.arange(spec.classes), spec.trials_per_class))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
    noise = rng.standard_normal((n, spec.channels, spec.length)) * spec.noise_sigma
    trials = noise
    start, stop = spec.window
    t = np.arange(start, stop) / spec.sampling_rate
    for i, k in enumerate(labels):
        wave = spec.amplitude * np.sin(2.0 * np.pi * spec.frequencies[k] * t + phases[i])
        trials[i, spec.channel_subsets[k], start:stop] += wave
    names = [f"class{k}@{spec.frequencies[k]:g}Hz" for k in range(spec.classes)]
    return TrialSet(trials, labels, spec.classes, spec.sampling_rate, names, provenance=f"synth(seed={spec.seed})")
