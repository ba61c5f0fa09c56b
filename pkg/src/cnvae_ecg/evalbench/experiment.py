"""Enrichment and transfer experiment grids and their CSV report."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..ecg.io import record_hash, split_hash
from ..ecg.record import ClassVocabulary, EcgRecord
from ..errors import ContractError, LeakageError
from .classifier import ClassifierConfig, evaluate, train_classifier
from .enrichment import MODES, EnrichedSet, Generator, balance_pretrain, enrich_binary

COLUMNS = ("protocol", "class", "proportion", "seed", "auroc", "train_size", "generated_count", "test_hash")
TRANSFER_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass
class EnrichmentPlan:
    mode: str
    proportions: tuple[float, ...]
    generator: Generator | None = None
    seeds: tuple[int, ...] = (0,)
    generator_id: str = "none"
    include_baseline: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.proportions = tuple(float(p) for p in self.proportions)
        if any(not p > 0 for p in self.proportions):
            raise ContractError(f"proportions must be > 0, got {self.proportions}")
        self.seeds = tuple(int(s) for s in self.seeds)


@dataclass
class Splits:
    train: list[EcgRecord]
    val: list[EcgRecord]
    test: list[EcgRecord]
    vocabulary: ClassVocabulary

    def frozen_hashes(self) -> set[str]:
        return {record_hash(r) for r in self.val + self.test}


@dataclass(frozen=True)
class MetricRow:
    protocol: str
    class_name: str
    proportion: str
    seed: int
    auroc: float
    train_size: int
    generated_count: int
    test_hash: str

    def as_list(self) -> list[str]:
        return [self.protocol, self.class_name, self.proportion, str(self.seed), repr(self.auroc),
                str(self.train_size), str(self.generated_count), self.test_hash]


def format_proportion(p: float) -> str:
    return repr(float(p))


@dataclass
class MetricsReport:
    rows: list[MetricRow]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        hashes = {r.test_hash for r in self.rows}
        if len(hashes) > 1:
            raise ContractError(f"one report must use one test split, found hashes {sorted(hashes)}")
        for r in self.rows:
            if not 0.0 <= r.auroc <= 1.0:
                raise ContractError(f"AUROC {r.auroc} outside [0, 1] in row {r}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow(r.as_list())
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != COLUMNS:
            raise ContractError(f"report header must be {','.join(COLUMNS)}, got {header}")
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            if len(rec) != len(COLUMNS):
                raise ContractError(f"line {line_no}: expected {len(COLUMNS)} fields, got {len(rec)}")
            p, c, prop, seed, auc, size, gen, h = rec
            rows.append(MetricRow(p, c, prop, int(seed), float(auc), int(size), int(gen), h))
        return cls(rows)

    @classmethod
    def read(cls, path) -> "MetricsReport":
        return cls.from_csv(Path(path).read_text())

    def mean_auroc(self, protocol: str | None = None, class_name: str | None = None,
                   proportion: str | None = None, seed: int | None = None) -> float:
        vals = [r.auroc for r in self.rows
                if (protocol is None or r.protocol == protocol) and (class_name is None or r.class_name == class_name)
                and (proportion is None or r.proportion == proportion) and (seed is None or r.seed == seed)]
        if not vals:
            raise ContractError("no rows match the selection")
        return float(np.mean(vals))


def check_leakage(records: list[EcgRecord], frozen: set[str]) -> None:
    for i, r in enumerate(records):
        if record_hash(r) in frozen:
            raise LeakageError(f"training record {i} (generated={r.generated}) also appears in the val/test split")


def _cell_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _rows(protocol: str, scores: dict[str, float], proportion: str, seed: int, train_size: int,
          generated: int, test_hash: str) -> list[MetricRow]:
    return [MetricRow(protocol, name, proportion, seed, float(v), train_size, generated, test_hash)
            for name, v in scores.items()]


def run_enrichment(plan: EnrichmentPlan, splits: Splits, config: ClassifierConfig,
                   classes: tuple[str, ...] | None = None) -> MetricsReport:
    """Retrain from scratch for every (seed, proportion); val/test never see generated data."""
    if plan.mode == "balanced_pretrain":
        raise ContractError("balanced_pretrain belongs to the transfer protocol")
    frozen = splits.frozen_hashes()
    test_hash = split_hash(splits.test)
    protocol = f"enrich_{plan.mode}"
    rows = []
    for seed in plan.seeds:
        cfg = replace(config, seed=seed)
        cells = [(0.0, EnrichedSet(list(splits.train), {}))] if plan.include_baseline else []
        for j, n in enumerate(plan.proportions):
            if plan.generator is None:  # disabled generator: the cell is a plain run
                cells.append((n, EnrichedSet(list(splits.train), {})))
            else:
                cells.append((n, enrich_binary(splits.train, plan.generator, plan.mode, n, _cell_seed(seed, j))))
        for n, enriched in cells:
            check_leakage(enriched.records, frozen)
            result = train_classifier(enriched.records, splits.val, splits.vocabulary, cfg)
            scores = evaluate(result.model, splits.test, splits.vocabulary)
            if classes:
                scores = {k: v for k, v in scores.items() if k in classes}
            rows += _rows(protocol, scores, format_proportion(n), seed, len(enriched.records),
                          enriched.generated_count, test_hash)
    if split_hash(splits.test) != test_hash or splits.frozen_hashes() != frozen:
        raise LeakageError("val/test splits changed during the experiment")
    return MetricsReport(rows, {"generator": plan.generator_id, "seeds": list(plan.seeds)})


def run_transfer(pretrain: Splits, target: Splits, config: ClassifierConfig, seeds=(0,),
                 generator: Generator | None = None, generator_id: str = "none", balance: bool = True,
                 fractions: tuple[float, ...] = TRANSFER_FRACTIONS, finetune_epochs: int | None = None,
                 majority: str | None = None) -> MetricsReport:
    """Pretrain (optionally on a generator-balanced set), then fine-tune on fractions of the target train set.

    Rows hold per-fraction test AUROC; extra ``transfer_avg`` rows hold the
    per-class mean over fractions.
    """
    if tuple(pretrain.vocabulary.names) != tuple(target.vocabulary.names):
        raise ContractError("pretrain and target datasets must share one class vocabulary")
    if balance and generator is None:
        raise ContractError("balancing the pretrain set needs a generator")
    vocab = target.vocabulary
    frozen = target.frozen_hashes() | pretrain.frozen_hashes()
    test_hash = split_hash(target.test)
    protocol = "transfer_balanced" if balance else "transfer"
    rows = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        pre = balance_pretrain(pretrain.train, vocab, generator, majority, _cell_seed(seed, 99)) if balance \
            else EnrichedSet(list(pretrain.train), {})
        check_leakage(pre.records, frozen)
        base = train_classifier(pre.records, pretrain.val, vocab, cfg)
        per_fraction = []
        rng = np.random.default_rng([seed, 5])
        order = rng.permutation(len(target.train))
        for frac in fractions:
            take = max(2, int(round(frac * len(target.train))))
            subset = [target.train[i] for i in sorted(order[:take])]
            model = base.checkpoint.build_model()
            model.reset_head(_cell_seed(seed, int(frac * 100)))
            ft_cfg = replace(cfg, epochs=finetune_epochs or cfg.epochs)
            tuned = train_classifier(subset, target.val, vocab, ft_cfg, init=model)
            scores = evaluate(tuned.model, target.test, vocab)
            per_fraction.append(scores)
            rows += _rows(protocol, scores, format_proportion(frac), seed, len(subset), pre.generated_count,
                          test_hash)
        names = [n for n in vocab.names if all(n in s for s in per_fraction)]
        avg = {n: float(np.mean([s[n] for s in per_fraction])) for n in names}
        rows += _rows(protocol + "_avg", avg, "avg", seed, len(target.train), pre.generated_count, test_hash)
    return MetricsReport(rows, {"generator": generator_id, "seeds": list(seeds)})


def run_experiment(plan: EnrichmentPlan, splits: Splits, config: ClassifierConfig,
                   pretrain: Splits | None = None, **transfer_kw) -> MetricsReport:
    """Dispatch on the plan mode: binary enrichment sweep, or the transfer protocol."""
    if plan.mode == "balanced_pretrain":
        if pretrain is None:
            raise ContractError("the transfer protocol needs a pretrain dataset")
        return run_transfer(pretrain, splits, config, plan.seeds, plan.generator, plan.generator_id,
                            balance=plan.generator is not None, **transfer_kw)
    return run_enrichment(plan, splits, config)
