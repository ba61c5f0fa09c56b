from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..errors import ContractError
from .record import EcgRecord

log = logging.getLogger(__name__)


class FilterError(ContractError):
    pass


@dataclass(frozen=True)
class Exclusion:
    index: int
    lead: str
    value: float


@dataclass
class PercentileBounds:
    """Per-lead amplitude limits, frozen on a training set and reused on val/test."""

    lo: dict[str, float]
    hi: dict[str, float]

    def violation(self, rec: EcgRecord) -> tuple[str, float] | None:
        for name in rec.lead_names:
            sig = rec.leads[name]
            if sig.size == 0:
                continue
            mn, mx = float(sig.min()), float(sig.max())
            if mn < self.lo[name]:
                return name, mn
            if mx > self.hi[name]:
                return name, mx
        return None


@dataclass
class FilterReport:
    bounds: PercentileBounds
    kept: list[int]
    excluded: list[Exclusion] = field(default_factory=list)


def percentile_bounds(dataset: list[EcgRecord], lo: float = 2.5, hi: float = 97.5) -> PercentileBounds:
    """Per lead: ``lo``-th percentile of record minima and ``hi``-th percentile of record maxima."""
    if not dataset:
        raise ContractError("percentile filtering needs a non-empty dataset")
    if not 0 <= lo < hi <= 100:
        raise ContractError(f"need 0 <= lo < hi <= 100, got lo={lo}, hi={hi}")
    names = dataset[0].lead_names
    bounds_lo, bounds_hi = {}, {}
    for name in names:
        sigs = [r.leads[name] for r in dataset if r.length]
        if not sigs:
            bounds_lo[name], bounds_hi[name] = -np.inf, np.inf
            continue
        bounds_lo[name] = float(np.percentile([s.min() for s in sigs], lo))
        bounds_hi[name] = float(np.percentile([s.max() for s in sigs], hi))
    return PercentileBounds(bounds_lo, bounds_hi)


def percentile_filter(dataset: list[EcgRecord], lo: float = 2.5, hi: float = 97.5,
                      bounds: PercentileBounds | None = None,
                      min_keep_fraction: float = 0.0) -> tuple[list[EcgRecord], FilterReport]:
    """Drop records whose per-lead extremes fall outside the dataset-wide percentile band.

    Pass ``bounds`` from a training-set call to apply the same limits to another split.
    """
    if bounds is None:
        bounds = percentile_bounds(dataset, lo, hi)
    elif not dataset:
        raise ContractError("percentile filtering needs a non-empty dataset")
    report = FilterReport(bounds, kept=[])
    for i, rec in enumerate(dataset):
        bad = bounds.violation(rec)
        if bad is None:
            report.kept.append(i)
        else:
            report.excluded.append(Exclusion(i, *bad))
    if not report.kept:
        raise FilterError(f"percentile filter excluded all {len(dataset)} records; check lo/hi")
    frac = len(report.kept) / len(dataset)
    if frac < min_keep_fraction:
        raise FilterError(f"percentile filter kept {frac:.1%} of records, below the {min_keep_fraction:.1%} minimum")
    return [dataset[i] for i in report.kept], report


def resample(rec: EcgRecord, target_fs: int) -> EcgRecord:
    """Linear-interpolation resampling onto a ``target_fs`` grid starting at t=0."""
    if target_fs <= 0:
        raise ContractError(f"target sampling rate must be positive, got {target_fs}")
    if rec.length == 0:
        raise ContractError("cannot resample a zero-length record")
    if target_fs == rec.fs:
        return EcgRecord({k: v.copy() for k, v in rec.leads.items()}, rec.fs, rec.labels, rec.generated)
    n_out = int(round(rec.length * target_fs / rec.fs))
    t_in = np.arange(rec.length) / rec.fs
    t_out = np.arange(n_out) / target_fs
    leads = {k: np.interp(t_out, t_in, v) for k, v in rec.leads.items()}
    return EcgRecord(leads, target_fs, rec.labels, rec.generated)


class Quantized(NamedTuple):
    bins: np.ndarray
    clamped: int


def bin_width(bits: int) -> float:
    return 2.0 / (1 << bits)


def _check_bits(bits: int) -> None:
    if not 1 <= bits <= 16:
        raise ContractError(f"bits must lie in [1, 16], got {bits}")


def quantize(values: np.ndarray, bits: int) -> Quantized:
    """Map amplitudes in [-1, 1] onto ``2**bits`` uniform bins; out-of-range values are clamped and counted."""
    _check_bits(bits)
    values = np.asarray(values, dtype=np.float64)
    n = 1 << bits
    clamped = int(np.count_nonzero((values < -1.0) | (values > 1.0)))
    if clamped:
        log.warning("quantize: clamped %d out-of-range samples", clamped)
    idx = np.floor((np.clip(values, -1.0, 1.0) + 1.0) / bin_width(bits)).astype(np.int64)
    return Quantized(np.clip(idx, 0, n - 1), clamped)


def dequantize(bins: np.ndarray, bits: int) -> np.ndarray:
    _check_bits(bits)
    return -1.0 + (np.asarray(bins, dtype=np.float64) + 0.5) * bin_width(bits)


@dataclass
class Normalizer:
    """Per-lead affine map of [min, max] onto [-1, 1]."""

    lo: dict[str, float]
    hi: dict[str, float]

    @classmethod
    def fit(cls, dataset: list[EcgRecord]) -> "Normalizer":
        if not dataset:
            raise ContractError("cannot fit a normalizer on an empty dataset")
        names = dataset[0].lead_names
        lo = {k: float(min(r.leads[k].min() for r in dataset)) for k in names}
        hi = {k: float(max(r.leads[k].max() for r in dataset)) for k in names}
        for k in names:
            if hi[k] <= lo[k]:
                hi[k] = lo[k] + 1.0
        return cls(lo, hi)

    def _ab(self, name: str) -> tuple[float, float]:
        half = (self.hi[name] - self.lo[name]) / 2
        return (self.hi[name] + self.lo[name]) / 2, half

    def apply(self, rec: EcgRecord) -> EcgRecord:
        leads = {}
        for k, v in rec.leads.items():
            mid, half = self._ab(k)
            leads[k] = (v - mid) / half
        return EcgRecord(leads, rec.fs, rec.labels, rec.generated)

    def invert_array(self, arr: np.ndarray, order) -> np.ndarray:
        out = np.empty_like(arr)
        for i, k in enumerate(order):
            mid, half = self._ab(k)
            out[..., i, :] = arr[..., i, :] * half + mid
        return out

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls({k: float(v) for k, v in d["lo"].items()}, {k: float(v) for k, v in d["hi"].items()})
