"""Architecture hyperparameters and ablation variants."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

from ..errors import ConfigError

# variant name -> (use MFE, use FR, use TFS, use CFS)
ABLATIONS: dict[str, tuple[bool, bool, bool, bool]] = {
    "full": (True, True, True, True),
    "wo_mfe": (False, True, True, True),
    "wo_fr": (True, False, False, False),
    "tfs_only": (True, True, True, False),
    "cfs_only": (True, True, False, True),
    "neither": (True, True, False, False),
}

ABLATION_LABELS = {
    "full": "FR + MFE (proposed)",
    "wo_mfe": "w/o MFE",
    "wo_fr": "w/o FR",
    "tfs_only": "TFS only",
    "cfs_only": "CFS only",
    "neither": "w/o TFS and CFS",
}


@dataclass
class NetworkConfig:
    electrodes: int = 22
    trial_length: int = 1000
    classes: int = 4
    stem_filters: int = 8
    stem_temporal_kernel: int = 64
    stem_depth_multiplier: int = 2
    stem_pool: Optional[int] = None
    mfe_branch_kernels: tuple[int, ...] = (7, 9, 11)
    mfe_filters_per_branch: int = 8
    mfe_pool_branch: bool = True
    fr_channels: int = 32
    temporal_scale_factor: int = 4
    scale_base: int = 2
    channel_split_factor: int = 4
    pred_filters: int = 16
    pred_kernel: int = 16
    dropout_p: float = 0.25
    elu_alpha: float = 1.0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    ablation: str = "full"

    def __post_init__(self):
        self.mfe_branch_kernels = tuple(int(k) for k in self.mfe_branch_kernels)
        if self.stem_pool is None:
            self.stem_pool = self.default_stem_pool()
        self.validate()

    # -- derived geometry -------------------------------------------------

    def scales(self) -> list[int]:
        """Pooling scales s_i = alpha * 2**(i-1) for i = 0 .. beta-1 (s_0 is the skip path)."""
        return [int(round(self.scale_base * 2.0 ** (i - 1))) for i in range(self.temporal_scale_factor)]

    def default_stem_pool(self) -> int:
        # W/4, rounded down to a length every TFS scale divides
        unit = max(self.scales())
        if self.mfe_pool_branch:
            unit = max(unit, 2)
        return max(unit, (self.trial_length // 4) // unit * unit)

    @property
    def stem_channels(self) -> int:
        return self.stem_filters * self.stem_depth_multiplier

    @property
    def mfe_channels(self) -> int:
        n = len(self.mfe_branch_kernels) + (1 if self.mfe_pool_branch else 0)
        return n * self.mfe_filters_per_branch

    @property
    def switches(self) -> tuple[bool, bool, bool, bool]:
        return ABLATIONS[self.ablation]

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"network.{key}: {msg}")

        need(self.ablation in ABLATIONS, "ablation", f"unknown variant {self.ablation!r}; expected one of {sorted(ABLATIONS)}")
        for key in ("electrodes", "trial_length", "stem_filters", "stem_temporal_kernel", "stem_depth_multiplier",
                    "mfe_filters_per_branch", "fr_channels", "pred_filters", "pred_kernel", "scale_base"):
            need(int(getattr(self, key)) >= 1, key, "must be >= 1")
        need(self.classes >= 2, "classes", "need at least 2 classes")
        need(self.temporal_scale_factor >= 1, "temporal_scale_factor", "beta must be >= 1")
        need(self.channel_split_factor >= 1, "channel_split_factor", "gamma must be >= 1")
        need(len(self.mfe_branch_kernels) >= 1, "mfe_branch_kernels", "need at least one branch")
        need(0.0 <= self.dropout_p < 1.0, "dropout_p", "must lie in [0, 1)")
        need(self.stem_temporal_kernel <= self.trial_length, "stem_temporal_kernel",
             f"kernel {self.stem_temporal_kernel} longer than trial length {self.trial_length}")
        t = self.stem_pool
        need(1 <= t <= self.trial_length, "stem_pool", f"{t} must lie in [1, trial_length]")
        scales = self.scales()
        need(all(s >= 1 for s in scales), "scale_base", "scales must be positive integers")
        for s in scales[1:]:
            need(s <= t and t % s == 0, "temporal_scale_factor",
                 f"scale {s} does not divide the temporal length {t}")
        need(all(k <= t for k in self.mfe_branch_kernels), "mfe_branch_kernels",
             f"branch kernel longer than temporal length {t}")
        if self.mfe_pool_branch:
            need(t % 2 == 0, "stem_pool", "pooled MFE branch needs an even temporal length")
        p, g = self.fr_channels, self.channel_split_factor
        need(p % g == 0, "channel_split_factor", f"fr_channels {p} not divisible by gamma {g}")
        need((p // g) % 2 == 0, "channel_split_factor", f"group size {p // g} cannot be halved")
        need(self.pred_kernel <= t, "pred_kernel", f"longer than temporal length {t}")

    # -- (de)serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mfe_branch_kernels"] = list(self.mfe_branch_kernels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"network.{unknown[0]}: unknown key")
        return cls(**d)

    def with_updates(self, **changes) -> "NetworkConfig":
        d = self.to_dict()
        d.update(changes)
        if "trial_length" in changes and "stem_pool" not in changes:
            d["stem_pool"] = None
        return NetworkConfig.from_dict(d)
