"""Command-line entry point: ``cnvae-ecg <subcommand> CONFIG``."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ecg.io import Dataset, read_dataset, write_dataset
from .ecg.leads import reduce_to_eight
from .ecg.preprocess import percentile_filter, resample
from .ecg.record import ClassVocabulary, EcgRecord
from .errors import ContractError, NumericError
from .evalbench.experiment import EnrichmentPlan, MetricsReport, Splits, run_enrichment, run_transfer
from .model import CheckpointGenerator, ModelCheckpoint, generate, train
from .plots import plot_curves, plot_record
from .runconfig import RunConfig, load_config
from .synth import OracleGenerator, default_class_specs, synth_dataset, with_noise

log = logging.getLogger("cnvae_ecg")

MODEL_FILE = "model.cnv"


def class_specs(cfg: RunConfig):
    specs = {s.name: s for s in default_class_specs()}
    if cfg.data.noise_std is not None:
        specs = {k: with_noise(s, cfg.data.noise_std) for k, s in specs.items()}
    return specs


def split_records(records: list[EcgRecord], val_fraction: float, test_fraction: float,
                  seed: int) -> tuple[list[EcgRecord], list[EcgRecord], list[EcgRecord]]:
    """Stratified by label mask; every split keeps the original record order."""
    if not 0 <= val_fraction < 1 or not 0 <= test_fraction < 1 or val_fraction + test_fraction >= 1:
        raise ContractError(f"bad split fractions val={val_fraction}, test={test_fraction}")
    rng = np.random.default_rng([seed, 17])
    which = np.zeros(len(records), dtype=int)
    masks = np.array([r.labels for r in records])
    for m in np.unique(masks):
        idx = rng.permutation(np.flatnonzero(masks == m))
        n_test = int(round(test_fraction * len(idx)))
        n_val = int(round(val_fraction * len(idx)))
        which[idx[:n_test]] = 2
        which[idx[n_test:n_test + n_val]] = 1
    parts = ([], [], [])
    for r, w in zip(records, which):
        parts[w].append(r)
    return parts


def _write_resolved(cfg: RunConfig, command: str) -> None:
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{command}.config.yaml").write_text(cfg.dump())


def _fit_records(records: list[EcgRecord], cfg: RunConfig) -> list[EcgRecord]:
    """8-lead, model sampling rate, cropped to the model length."""
    out = []
    length, fs = cfg.model.length, cfg.model.fs
    for r in records:
        if r.n_leads == 12:
            r, _ = reduce_to_eight(r)
        if r.fs != fs:
            r = resample(r, fs)
        if r.length < length:
            raise ContractError(f"record of {r.length} samples is shorter than the model length {length}")
        if r.length > length:
            r = EcgRecord({k: v[:length] for k, v in r.leads.items()}, r.fs, r.labels, r.generated)
        out.append(r)
    return out


def cmd_synth_data(cfg: RunConfig, args) -> None:
    specs = class_specs(cfg)
    unknown = set(cfg.data.classes) - set(specs)
    if unknown:
        raise ContractError(f"data.classes names unknown class specs {sorted(unknown)}; known: {sorted(specs)}")
    pairs = [(specs[name], int(count)) for name, count in cfg.data.classes.items()]
    path = cfg.resolve(cfg.data.path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = synth_dataset(pairs, cfg.data.fs, cfg.data.duration, cfg.data.seed, path)
    print(f"wrote {len(ds)} records to {path}")


def cmd_train(cfg: RunConfig, args) -> None:
    ds = read_dataset(cfg.resolve(cfg.data.path))
    records = _fit_records(ds.records, cfg)
    if cfg.data.filter:
        lo, hi = cfg.data.filter
        records, report = percentile_filter(records, lo, hi)
        print(f"percentile filter kept {len(records)} of {len(ds.records)} records")
    model_cfg = replace(cfg.model, n_classes=len(ds.vocabulary))
    cfg.model = model_cfg
    ck = train(records, ds.vocabulary, model_cfg, cfg.training,
               progress=lambda row: print(f"epoch {row['epoch']:4d}  nll {row['nll']:.2f}  kl {row['kl']:.2f}  "
                                          f"total {row['total']:.2f}", flush=True))
    out = cfg.output_dir()
    ck.save(out / MODEL_FILE)
    buf = io.StringIO()
    cols = ("epoch", "nll", "kl", "total", "objective", "kl_weight")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in ck.history:
        w.writerow([row["epoch"]] + [repr(row[c]) for c in cols[1:]])
    (out / "loss.csv").write_text(buf.getvalue())
    print(f"wrote {out / MODEL_FILE} and {out / 'loss.csv'}")


def _load_checkpoint(cfg: RunConfig, args) -> ModelCheckpoint:
    return ModelCheckpoint.load(Path(args.checkpoint) if args.checkpoint else cfg.output_dir() / MODEL_FILE)


def cmd_generate(cfg: RunConfig, args) -> None:
    ck = _load_checkpoint(cfg, args)
    g = cfg.generate
    mask = ck.vocabulary.mask(*g.labels)
    recs = generate(ck, mask, g.count, g.tau, g.seed)
    out = cfg.output_dir()
    write_dataset(out / "generated.ecg8", Dataset(ck.vocabulary, recs))
    for i, rec in enumerate(recs[:g.svg]):
        (out / f"generated_{i}.svg").write_text(plot_record(rec))
    print(f"wrote {len(recs)} records to {out / 'generated.ecg8'}")


def _make_generator(cfg: RunConfig, args, vocab: ClassVocabulary):
    kind = cfg.experiment.generator
    if kind == "oracle":
        specs = [s for s in class_specs(cfg).values() if s.name in vocab.names]
        return OracleGenerator(specs, vocab, cfg.data.fs, cfg.data.duration), "oracle"
    if kind == "cnvae":
        ck = _load_checkpoint(cfg, args)
        if tuple(ck.vocabulary.names) != tuple(vocab.names):
            raise ContractError(f"checkpoint vocabulary {ck.vocabulary.names} differs from dataset {vocab.names}")
        return CheckpointGenerator(ck), "cnvae"
    if kind in ("none", None):
        return None, "none"
    raise ContractError(f"experiment.generator must be oracle, cnvae or none, got {kind!r}")


def _splits(cfg: RunConfig, path: str) -> Splits:
    ds = read_dataset(cfg.resolve(path))
    tr, va, te = split_records(ds.records, cfg.data.val_fraction, cfg.data.test_fraction, cfg.data.seed)
    return Splits(tr, va, te, ds.vocabulary)


def _emit_report(cfg: RunConfig, report: MetricsReport, stem: str) -> None:
    out = cfg.output_dir()
    report.write(out / f"{stem}_report.csv")
    (out / f"{stem}_curves.svg").write_text(plot_curves(report))
    print(f"wrote {out / f'{stem}_report.csv'} ({len(report.rows)} rows)")


def cmd_eval_enrich(cfg: RunConfig, args) -> None:
    splits = _splits(cfg, cfg.data.path)
    gen, gen_id = _make_generator(cfg, args, splits.vocabulary)
    e = cfg.experiment
    plan = EnrichmentPlan(e.mode, tuple(e.proportions), gen, tuple(e.seeds), gen_id)
    report = run_enrichment(plan, splits, cfg.classifier, tuple(e.classes) if e.classes else None)
    _emit_report(cfg, report, "enrich")


def cmd_eval_transfer(cfg: RunConfig, args) -> None:
    if not cfg.data.target_path:
        raise ContractError("eval-transfer needs data.target_path")
    pretrain = _splits(cfg, cfg.data.path)
    target = _splits(cfg, cfg.data.target_path)
    e = cfg.experiment
    gen, gen_id = _make_generator(cfg, args, pretrain.vocabulary) if e.balance else (None, "none")
    report = run_transfer(pretrain, target, cfg.classifier, tuple(e.seeds), gen, gen_id, balance=e.balance,
                          finetune_epochs=e.finetune_epochs)
    _emit_report(cfg, report, "transfer")


def summarize(reports: list[MetricsReport]) -> str:
    groups: dict[tuple, list[float]] = {}
    for rep in reports:
        for r in rep.rows:
            groups.setdefault((r.protocol, r.class_name, r.proportion), []).append(r.auroc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("protocol", "class", "proportion", "runs", "auroc_mean", "auroc_std"))
    for key in sorted(groups):
        v = np.array(groups[key])
        w.writerow(list(key) + [len(v), f"{v.mean():.6f}", f"{v.std():.6f}"])
    return buf.getvalue()


def cmd_report(args) -> None:
    src = Path(args.inp)
    if not src.is_dir():
        raise OSError(f"{src} is not a directory")
    paths = sorted(p for p in src.glob("*_report.csv"))
    if not paths:
        raise ContractError(f"no reports found in {src}")
    table = summarize([MetricsReport.read(p) for p in paths])
    out = Path(args.out) if args.out else src / "summary.csv"
    out.write_text(table)
    print(table, end="")


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "generate": cmd_generate,
    "eval-enrich": cmd_eval_enrich,
    "eval-transfer": cmd_eval_transfer,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnvae-ecg", description="Conditional hierarchical VAE for 8/12-lead ECG")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="YAML run config")
        p.add_argument("--output", help="output directory (overrides config and environment)")
        if name in ("generate", "eval-enrich", "eval-transfer"):
            p.add_argument("--checkpoint", help=f"model checkpoint (default: OUTPUT/{MODEL_FILE})")
    p = sub.add_parser("report")
    p.add_argument("--in", dest="inp", required=True, help="directory holding *_report.csv files")
    p.add_argument("--out", help="summary CSV path (default: IN/summary.csv)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cmd_report(args)
            return 0
        cfg = load_config(args.config)
        if args.output:
            cfg.output = args.output
        _write_resolved(cfg, args.command)
        COMMANDS[args.command](cfg, args)
        _write_resolved(cfg, args.command)
    except (ContractError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
