from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

LEADS_8 = ("I", "III", "V1", "V2", "V3", "V4", "V5", "V6")
LEADS_12 = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")
CHEST_LEADS = ("V1", "V2", "V3", "V4", "V5", "V6")

# Nine-class rhythm/morphology set, majority (sinus rhythm) first.
DEFAULT_CLASSES = ("SR", "MI", "LAD", "TAb", "LVH", "AF", "STach", "SB", "IAVB")


@dataclass(frozen=True)
class ClassVocabulary:
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ContractError(f"class names must be unique: {self.names}")
        if len(self.names) > 32:
            raise ContractError("at most 32 classes fit in a u32 label bitmask")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ContractError(f"class {name!r} not in vocabulary {self.names}") from None

    def mask(self, *names: str) -> int:
        m = 0
        for n in names:
            m |= 1 << self.index(n)
        return m

    def decode(self, mask: int) -> list[str]:
        self.check_mask(mask)
        return [n for i, n in enumerate(self.names) if mask >> i & 1]

    def multi_hot(self, masks) -> np.ndarray:
        masks = np.atleast_1d(np.asarray(masks, dtype=np.int64))
        for m in masks:
            self.check_mask(int(m))
        bits = np.arange(len(self.names))
        return ((masks[:, None] >> bits[None, :]) & 1).astype(np.float64)

    def check_mask(self, mask: int) -> None:
        if mask < 0 or mask >> len(self.names):
            raise ContractError(f"label bitmask {mask:#x} has bits outside a {len(self.names)}-class vocabulary")


@dataclass
class EcgRecord:
    """A multi-lead recording; lead arrays are float64, normalized millivolts."""

    leads: dict[str, np.ndarray]
    fs: int
    labels: int = 0
    generated: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.leads = {k: np.asarray(v, dtype=np.float64) for k, v in self.leads.items()}
        names = set(self.leads)
        if names not in (set(LEADS_8), set(LEADS_12)):
            raise ContractError(f"record must hold the 8-lead set {LEADS_8} or the full 12-lead set, got {sorted(names)}")
        lengths = {v.shape for v in self.leads.values()}
        if len(lengths) != 1 or len(next(iter(lengths))) != 1:
            raise ContractError(f"all leads must be 1-d sequences of equal length, got shapes {sorted(lengths)}")
        if self.fs <= 0:
            raise ContractError(f"sampling rate must be positive, got {self.fs}")

    @property
    def lead_names(self) -> tuple[str, ...]:
        return LEADS_12 if len(self.leads) == 12 else LEADS_8

    @property
    def n_leads(self) -> int:
        return len(self.leads)

    @property
    def length(self) -> int:
        return len(next(iter(self.leads.values())))

    @property
    def duration(self) -> float:
        return self.length / self.fs

    def to_array(self, order=None) -> np.ndarray:
        order = self.lead_names if order is None else order
        return np.stack([self.leads[name] for name in order])

    @classmethod
    def from_array(cls, arr: np.ndarray, fs: int, labels: int = 0, order=None, generated: bool = False) -> "EcgRecord":
        arr = np.asarray(arr, dtype=np.float64)
        if order is None:
            order = {8: LEADS_8, 12: LEADS_12}.get(arr.shape[0])
            if order is None:
                raise ContractError(f"cannot infer lead order for {arr.shape[0]} leads")
        return cls(dict(zip(order, arr)), fs, labels, generated)
