"""Run configuration: packaged defaults, overlaid by a JSON file, overlaid by flags."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from .data import SynthSpec
from .errors import ConfigError
from .network import NetworkConfig
from .training import TrainConfig

SECTIONS = ("network", "train", "synth", "paths")


def default_document() -> dict:
    text = resources.files("frnet").joinpath("default_config.json").read_text()
    return json.loads(text)


def _check_types(section: str, values: dict, reference: dict) -> None:
    # compare against the packaged defaults; null defaults accept anything
    for key, value in values.items():
        if key not in reference:
            raise ConfigError(f"{section}.{key}: unknown key")
        ref = reference[key]
        if ref is None or value is None:
            continue
        if isinstance(ref, bool):
            ok = isinstance(value, bool)
        elif isinstance(ref, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(ref, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        else:
            ok = isinstance(value, type(ref))
        if not ok:
            raise ConfigError(f"{section}.{key}: expected {type(ref).__name__}, got {type(value).__name__}")


def merge(base: dict, overlay: dict, origin: str) -> dict:
    """Overlay a (possibly partial) config document onto ``base``."""
    if not isinstance(overlay, dict):
        raise ConfigError(f"{origin}: top level must be an object")
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if key == "seed":
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"seed: expected a non-negative integer, got {value!r}")
            out["seed"] = value
        elif key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object")
            if key in ("train", "synth") and "seed" in value:
                raise ConfigError(f"{key}.seed: set the top-level seed instead")
            _check_types(key, value, base[key])
            out[key].update(value)
        else:
            raise ConfigError(f"{key}: unknown key")
    return out


@dataclass
class RunConfig:
    network: NetworkConfig
    train: TrainConfig
    synth: SynthSpec
    data: Optional[str]
    out: str
    seed: int
    network_doc: dict

    @classmethod
    def from_document(cls, doc: dict) -> "RunConfig":
        seed = doc["seed"]
        net = NetworkConfig.from_dict(doc["network"])
        train = TrainConfig.from_dict({**doc["train"], "seed": seed})
        synth = SynthSpec.from_dict({**doc["synth"], "seed": seed})
        paths = doc["paths"]
        return cls(net, train, synth, paths.get("data"), paths.get("out") or "frnet_out", seed,
                   dict(doc["network"]))

    def network_for(self, electrodes: int, length: int, classes: int) -> NetworkConfig:
        """Network config with the data's geometry; a null stem_pool is re-derived from the length."""
        return NetworkConfig.from_dict({**self.network_doc, "electrodes": electrodes,
                                        "trial_length": length, "classes": classes})

    def to_document(self) -> dict:
        train = self.train.to_dict()
        train.pop("seed")
        synth = self.synth.to_dict()
        synth.pop("seed")
        return {"seed": self.seed, "network": self.network.to_dict(), "train": train, "synth": synth,
                "paths": {"data": self.data, "out": self.out}}


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Defaults < file at ``path`` < ``overrides`` (a partial document, e.g. from flags)."""
    doc = default_document()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"config file {path}: {exc.strerror}") from exc
        try:
            file_doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        doc = merge(doc, file_doc, str(path))
    if overrides:
        doc = merge(doc, overrides, "command line")
    return RunConfig.from_document(doc)
