"""Adding generated records to real training sets."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from ..ecg.record import ClassVocabulary, EcgRecord
from ..errors import ContractError

log = logging.getLogger(__name__)

MODES = ("both_classes_proportional", "minority_only", "balanced_pretrain")


class Generator(Protocol):
    def __call__(self, labels: int, count: int, seed: int) -> list[EcgRecord]: ...


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def draw(generator: Generator, labels: int, count: int, seed: int) -> list[EcgRecord]:
    """Call the generator and check what comes back."""
    if count == 0:
        return []
    recs = list(generator(labels, count, seed))
    if len(recs) != count:
        raise ContractError(f"generator returned {len(recs)} records, {count} requested")
    for r in recs:
        if r.labels != labels:
            raise ContractError(f"generator returned labels {r.labels:#x} for a request of {labels:#x}")
        r.generated = True
    return recs


def binary_counts(records: list[EcgRecord]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for r in records:
        counts[r.labels] = counts.get(r.labels, 0) + 1
    if len(counts) != 2:
        raise ContractError(f"binary enrichment needs exactly two label masks, found {sorted(counts)}")
    return counts


def planned_additions(counts: dict[int, int], mode: str, n: float) -> dict[int, int]:
    """Generated-record count per label mask for one enrichment step."""
    if not n > 0:
        raise ContractError(f"proportion must be > 0, got {n}")
    if mode == "both_classes_proportional":
        return {m: round_half_up(n * c) for m, c in counts.items()}
    if mode == "minority_only":
        (minor, c_min), (major, c_max) = sorted(counts.items(), key=lambda kv: (kv[1], kv[0]))
        return {major: 0, minor: round_half_up(n * (c_max - c_min))}
    raise ContractError(f"binary enrichment mode must be one of {MODES[:2]}, got {mode!r}")


@dataclass
class EnrichedSet:
    records: list[EcgRecord]
    added: dict[int, int]

    @property
    def generated_count(self) -> int:
        return sum(self.added.values())


def enrich_binary(real_train: list[EcgRecord], generator: Generator, mode: str, n: float,
                  seed: int = 0) -> EnrichedSet:
    """Real records (untouched, first) followed by generated ones."""
    counts = binary_counts(real_train)
    plan = planned_additions(counts, mode, n)
    out = list(real_train)
    for i, (mask, k) in enumerate(sorted(plan.items())):
        out.extend(draw(generator, mask, k, int(np.random.SeedSequence([seed, i, mask]).generate_state(1)[0])))
    return EnrichedSet(out, plan)


def pretrain_topups(class_counts: dict[str, int], majority: str) -> dict[str, int]:
    """Generated records per class so every class reaches the majority count."""
    if majority not in class_counts:
        raise ContractError(f"majority class {majority!r} not among {sorted(class_counts)}")
    top = class_counts[majority]
    out = {}
    for name, c in class_counts.items():
        if c > top:
            log.warning("class %s has %d records, more than majority %s (%d); left as is", name, c, majority, top)
            out[name] = 0
        else:
            out[name] = top - c
    return out


def class_counts(records: list[EcgRecord], vocabulary: ClassVocabulary) -> dict[str, int]:
    hot = vocabulary.multi_hot([r.labels for r in records]) if records else np.zeros((0, len(vocabulary)))
    return {name: int(hot[:, k].sum()) for k, name in enumerate(vocabulary.names)}


def balance_pretrain(records: list[EcgRecord], vocabulary: ClassVocabulary, generator: Generator,
                     majority: str | None = None, seed: int = 0) -> EnrichedSet:
    """Top up every non-majority class with single-label generated records."""
    counts = class_counts(records, vocabulary)
    majority = majority or max(counts, key=lambda k: (counts[k], -vocabulary.index(k)))
    plan = pretrain_topups(counts, majority)
    out = list(records)
    added = {}
    for name, k in plan.items():
        mask = vocabulary.mask(name)
        added[mask] = k
        out.extend(draw(generator, mask, k, int(np.random.SeedSequence([seed, vocabulary.index(name)])
                                                 .generate_state(1)[0])))
    return EnrichedSet(out, added)
