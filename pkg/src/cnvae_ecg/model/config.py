from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..errors import ContractError


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the conditional hierarchical VAE.

    ``groups_per_scale`` runs from the coarsest (top) scale to the finest.
    Defaults are the desk-scale topology; :meth:`full_scale` gives the
    large one (35 groups, 5000 samples at 500 Hz).
    """

    scales: int = 3
    groups_per_scale: tuple[int, ...] = (2, 3, 4)
    latent_channels: int = 4
    width: int = 32
    kernel: int = 5
    pre_cells: int = 1
    post_cells: int = 1
    cells_per_group: int = 1
    n_components: int = 10
    bits: int = 8
    length: int = 512
    fs: int = 100
    n_classes: int = 2
    embed_dim: int = 64
    top_dim: int = 64
    head_kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "groups_per_scale", tuple(int(g) for g in self.groups_per_scale))
        if len(self.groups_per_scale) != self.scales:
            raise ContractError(f"groups_per_scale has {len(self.groups_per_scale)} entries but scales={self.scales}")
        counts = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "groups_per_scale"}
        bad = [k for k, v in counts.items() if v < 1] + ["groups_per_scale"] * any(g < 1 for g in self.groups_per_scale)
        if bad:
            raise ContractError(f"config counts must be >= 1: {bad}")
        if not 1 <= self.bits <= 16:
            raise ContractError(f"bits must lie in [1, 16], got {self.bits}")
        if self.length % self.downsample:
            raise ContractError(
                f"signal length {self.length} must be divisible by 2**(scales-1) = {self.downsample}")
        if self.kernel % 2 == 0 or self.head_kernel % 2 == 0:
            raise ContractError("kernel sizes must be odd")

    @property
    def downsample(self) -> int:
        return 2 ** (self.scales - 1)

    @property
    def n_groups(self) -> int:
        return sum(self.groups_per_scale)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups_per_scale"] = list(self.groups_per_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def full_scale(cls, n_classes: int = 9) -> "ModelConfig":
        return cls(scales=3, groups_per_scale=(5, 10, 20), width=12, pre_cells=4, post_cells=4,
                   cells_per_group=4, length=5000, fs=500, n_classes=n_classes)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-2
    weight_decay: float = 0.0
    warmup_epochs: float = 5.0
    grad_clip: float = 200.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ContractError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
