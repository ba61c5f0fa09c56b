"""YAML run configuration with strict key checking.

Unknown keys are reported with their line number, which is why the document
is first composed into a node tree rather than loaded straight to dicts.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ContractError
from .evalbench.classifier import ClassifierConfig
from .model.config import ModelConfig, TrainConfig

OUTPUT_ENV = "CNVAE_OUTPUT_DIR"


class ConfigError(ContractError):
    pass


def _names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


DATA_KEYS = {"path", "fs", "duration", "filter", "classes", "seed", "noise_std", "val_fraction",
             "test_fraction", "target_path"}
GENERATE_KEYS = {"labels", "count", "tau", "seed", "svg"}
EXPERIMENT_KEYS = {"mode", "proportions", "seeds", "generator", "classifier", "classes", "finetune_epochs",
                   "balance"}

SCHEMA = {
    "data": DATA_KEYS,
    "model": _names(ModelConfig),
    "training": _names(TrainConfig),
    "generate": GENERATE_KEYS,
    "experiment": EXPERIMENT_KEYS,
    "output": None,
}
NESTED = {("experiment", "classifier"): _names(ClassifierConfig)}


@dataclass
class DataSection:
    path: str = "dataset.ecg8"
    fs: int = 100
    duration: float = 5.12
    filter: list | None = field(default_factory=lambda: [2.5, 97.5])
    classes: dict = field(default_factory=lambda: {"normal": 100, "pathological": 100})
    seed: int = 0
    noise_std: float | None = None
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    target_path: str | None = None


@dataclass
class GenerateSection:
    labels: list = field(default_factory=lambda: ["pathological"])
    count: int = 8
    tau: float = 1.0
    seed: int = 0
    svg: int = 1


@dataclass
class ExperimentSection:
    mode: str = "minority_only"
    proportions: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    seeds: list = field(default_factory=lambda: [0])
    generator: str = "oracle"
    classifier: dict = field(default_factory=dict)
    classes: list | None = None
    finetune_epochs: int | None = None
    balance: bool = True


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    generate: GenerateSection = field(default_factory=GenerateSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output: str | None = None

    @property
    def classifier(self) -> ClassifierConfig:
        return ClassifierConfig(**self.experiment.classifier)

    def output_dir(self) -> Path:
        return Path(self.output or os.environ.get(OUTPUT_ENV) or "outputs")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.output_dir() / p

    def to_dict(self) -> dict:
        exp = {f.name: getattr(self.experiment, f.name) for f in fields(ExperimentSection)}
        exp["classifier"] = self.classifier.to_dict()
        return {
            "data": {f.name: getattr(self.data, f.name) for f in fields(DataSection)},
            "model": self.model.to_dict(),
            "training": {f.name: getattr(self.training, f.name) for f in fields(TrainConfig)},
            "generate": {f.name: getattr(self.generate, f.name) for f in fields(GenerateSection)},
            "experiment": exp,
            "output": str(self.output_dir()),
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)


def _check_keys(node, allowed: set[str] | None, where: str) -> None:
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"section {where!r} (line {node.start_mark.line + 1}) must be a mapping")
    for key_node, value_node in node.value:
        key = key_node.value
        line = key_node.start_mark.line + 1
        path = f"{where}.{key}" if where else key
        if allowed is not None and key not in allowed:
            raise ConfigError(f"unknown config key {path!r} at line {line}")
        nested = NESTED.get(tuple(path.split(".")))
        if nested is not None and not (isinstance(value_node, yaml.ScalarNode) and value_node.tag.endswith("null")):
            _check_keys(value_node, nested, path)


def parse_config(text: str) -> RunConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if root is None:
        return RunConfig()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("config must be a mapping of sections")
    for key_node, value_node in root.value:
        key, line = key_node.value, key_node.start_mark.line + 1
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r} at line {line}")
        if SCHEMA[key] is not None:
            _check_keys(value_node, SCHEMA[key], key)
    raw = yaml.safe_load(text) or {}
    try:
        return RunConfig(
            data=DataSection(**(raw.get("data") or {})),
            model=ModelConfig.from_dict(raw.get("model") or {}),
            training=TrainConfig(**(raw.get("training") or {})),
            generate=GenerateSection(**(raw.get("generate") or {})),
            experiment=ExperimentSection(**(raw.get("experiment") or {})),
            output=raw.get("output"),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
