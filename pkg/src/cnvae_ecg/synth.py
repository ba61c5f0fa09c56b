"""Parametric PQRST generator used as a stand-in for clinical data.

A beat is a sum of five Gaussian bumps placed at fractions of the RR interval;
beats are tiled from t=0 with jittered RR intervals, projected onto the eight
independent leads with fixed weights, and corrupted with white noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .ecg.io import Dataset, write_dataset
from .ecg.record import LEADS_8, ClassVocabulary, EcgRecord
from .errors import ContractError

WAVE_NAMES = ("P", "Q", "R", "S", "T")


@dataclass(frozen=True)
class Wave:
    amplitude: float
    center: float
    width: float


@dataclass(frozen=True)
class BeatTemplate:
    waves: tuple[Wave, ...]
    heart_rate: float
    jitter: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self):
        if len(self.waves) != 5:
            raise ContractError(f"a beat needs exactly five waves {WAVE_NAMES}, got {len(self.waves)}")
        centers = [w.center for w in self.waves]
        if not all(0 < c < 1 for c in centers) or any(b <= a for a, b in zip(centers, centers[1:])):
            raise ContractError(f"wave centers must be strictly increasing inside (0, 1), got {centers}")
        if any(w.width <= 0 for w in self.waves):
            raise ContractError("wave widths must be positive")
        if not 20 <= self.heart_rate <= 300:
            raise ContractError(f"heart rate must lie in [20, 300] bpm, got {self.heart_rate}")
        if self.jitter < 0 or self.noise_std < 0:
            raise ContractError("jitter and noise_std must be non-negative")

    @property
    def rr(self) -> float:
        return 60.0 / self.heart_rate


DEFAULT_PROJECTION = (0.6, 0.5, -0.4, 0.3, 0.8, 1.0, 0.8, 0.6)


@dataclass(frozen=True)
class ClassSpec:
    name: str
    template: BeatTemplate
    projection: tuple[float, ...] = DEFAULT_PROJECTION

    def __post_init__(self):
        proj = np.asarray(self.projection, dtype=np.float64)
        if proj.shape != (8,) or not np.all(np.isfinite(proj)) or not np.any(proj):
            raise ContractError("projection needs 8 finite weights with at least one nonzero")


def make_template(heart_rate: float, t_amplitude: float = 0.3, r_amplitude: float = 1.0,
                  jitter: float = 0.02, noise_std: float = 0.02, qrs_width: float = 0.012,
                  t_width: float = 0.05) -> BeatTemplate:
    """A plain sinus-like beat; widths are fractions of the RR interval."""
    waves = (
        Wave(0.12, 0.16, 0.025),
        Wave(-0.12, 0.33, qrs_width * 0.8),
        Wave(r_amplitude, 0.36, qrs_width),
        Wave(-0.2, 0.39, qrs_width * 0.8),
        Wave(t_amplitude, 0.62, t_width),
    )
    return BeatTemplate(waves, heart_rate, jitter, noise_std)


def default_class_specs() -> list[ClassSpec]:
    """Normal (60 bpm, upright T) vs pathological (150 bpm, inverted T, broad QRS).

    R-wave sigma is 25 ms for the normal class and 32 ms for the pathological one.
    """
    return [
        ClassSpec("normal", make_template(60.0, t_amplitude=0.3, qrs_width=0.025)),
        ClassSpec("pathological", make_template(150.0, t_amplitude=-0.3, qrs_width=0.08, t_width=0.08)),
    ]


def beat_waveform(template: BeatTemplate, fs: float, n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    out = np.zeros(n)
    rr = template.rr
    onset = 0.0
    duration = n / fs
    while onset < duration:
        this_rr = rr * max(0.3, 1.0 + template.jitter * rng.standard_normal()) if template.jitter else rr
        for w in template.waves:
            center = onset + w.center * this_rr
            sigma = w.width * this_rr
            out += w.amplitude * np.exp(-0.5 * ((t - center) / sigma) ** 2)
        onset += this_rr
    return out


def synth_record(spec: ClassSpec, fs: int, duration: float, seed, labels: int = 0) -> EcgRecord:
    n = int(round(fs * duration))
    if n < spec.template.rr * fs:
        raise ContractError(f"{duration} s at {fs} Hz is shorter than one beat interval ({spec.template.rr:.3f} s)")
    rng = np.random.default_rng(seed)
    wave = beat_waveform(spec.template, fs, n, rng)
    noise = rng.standard_normal((8, n)) * spec.template.noise_std
    leads = {name: w * wave + noise[i] for i, (name, w) in enumerate(zip(LEADS_8, spec.projection))}
    return EcgRecord(leads, fs, labels)


def detect_beats(signal: np.ndarray, fs: float, refractory: float = 0.2) -> int:
    """Local maxima above half the 99th-percentile amplitude, at least ``refractory`` s apart."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size < 3:
        return 0
    threshold = 0.5 * np.percentile(signal, 99)
    peaks, _ = find_peaks(signal, height=threshold, distance=max(1, int(math.ceil(refractory * fs))))
    return int(len(peaks))


def synth_records(specs_counts: list[tuple[ClassSpec, int]], fs: int, duration: float, seed: int,
                  vocabulary: ClassVocabulary | None = None) -> Dataset:
    vocab = vocabulary or ClassVocabulary(tuple(s.name for s, _ in specs_counts))
    records = []
    for ci, (spec, count) in enumerate(specs_counts):
        if count < 0:
            raise ContractError(f"class count for {spec.name} must be >= 0, got {count}")
        mask = vocab.mask(spec.name)
        for i in range(count):
            records.append(synth_record(spec, fs, duration, np.random.SeedSequence([seed, ci, i]), mask))
    return Dataset(vocab, records)


def synth_dataset(specs_counts: list[tuple[ClassSpec, int]], fs: int, duration: float, seed: int,
                  path) -> Dataset:
    """Generate records class by class and write them as an ECG8 file at ``path``."""
    ds = synth_records(specs_counts, fs, duration, seed)
    try:
        write_dataset(Path(path), ds)
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc
    return ds


class OracleGenerator:
    """Draws fresh records from the class specs; plays the role of a perfect generative model."""

    name = "oracle"

    def __init__(self, specs: list[ClassSpec], vocabulary: ClassVocabulary, fs: int, duration: float):
        self.specs = {vocabulary.mask(s.name): s for s in specs}
        self.vocabulary, self.fs, self.duration = vocabulary, fs, duration

    def __call__(self, labels: int, count: int, seed: int) -> list[EcgRecord]:
        if labels not in self.specs:
            raise ContractError(f"oracle generator has no class for label mask {labels:#x}")
        spec = self.specs[labels]
        out = []
        for i in range(count):
            rec = synth_record(spec, self.fs, self.duration, np.random.SeedSequence([seed, 7919, labels, i]), labels)
            rec.generated = True
            out.append(rec)
        return out


def with_noise(spec: ClassSpec, noise_std: float) -> ClassSpec:
    return replace(spec, template=replace(spec.template, noise_std=noise_std))
