"""Small XResNet1d-style multi-label classifier over 12-lead records."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..autograd import Tensor, functional as F, make_optimizer, no_grad, optimizer_step
from ..autograd.nn import BatchNorm1d, Conv1d, Linear, Module
from ..ecg.leads import expand_to_twelve
from ..ecg.record import LEADS_12, ClassVocabulary, EcgRecord
from ..errors import ContractError
from ..model.checkpoint import CheckpointError, decode_container, encode_container
from .metrics import per_class_auroc


@dataclass(frozen=True)
class ClassifierConfig:
    blocks: tuple[int, ...] = (1, 1, 1, 1)
    width: int = 16
    kernel: int = 5
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        if not self.blocks or any(b < 1 for b in self.blocks):
            raise ContractError(f"every stage needs >= 1 residual block, got {self.blocks}")
        if min(self.width, self.kernel, self.epochs, self.batch_size) < 1:
            raise ContractError("width, kernel, epochs and batch_size must be >= 1")

    @classmethod
    def full_scale(cls) -> "ClassifierConfig":
        return cls(blocks=(3, 4, 23, 3), width=64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks"] = list(self.blocks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        return cls(**d)


class ResBlock(Module):
    """conv-BN-ReLU-conv-BN with a zero-initialized last BN scale; the skip
    path downsamples by average pooling before a 1x1 conv."""

    def __init__(self, cin: int, cout: int, kernel: int, stride: int, rng: np.random.Generator):
        self.stride = stride
        self.conv1 = Conv1d(cin, cout, kernel, rng, stride=stride, bias=False, std=np.sqrt(2 / (cin * kernel)))
        self.bn1 = BatchNorm1d(cout)
        self.conv2 = Conv1d(cout, cout, kernel, rng, bias=False, std=np.sqrt(2 / (cout * kernel)))
        self.bn2 = BatchNorm1d(cout)
        self.bn2.gamma.data[:] = 0.0
        self.proj = None
        if cin != cout:
            self.proj = Conv1d(cin, cout, 1, rng, bias=False, std=np.sqrt(1 / cin))
            self.bn_proj = BatchNorm1d(cout)

    def forward(self, x: Tensor) -> Tensor:
        h = self.bn2(self.conv2(self.bn1(self.conv1(x)).relu()))
        skip = F.avg_pool1d(x, self.stride) if self.stride > 1 else x
        if self.proj is not None:
            skip = self.bn_proj(self.proj(skip))
        return (h + skip).relu()


class ResNet1d(Module):
    def __init__(self, config: ClassifierConfig, n_classes: int, n_leads: int = 12):
        rng = np.random.default_rng(config.seed)
        w, k = config.width, config.kernel
        self.stem = Conv1d(n_leads, w, k, rng, bias=False, std=np.sqrt(2 / (n_leads * k)))
        self.stem_bn = BatchNorm1d(w)
        self.blocks = []
        cin = w
        for stage, count in enumerate(config.blocks):
            cout = w * 2 ** min(stage, 2)
            for i in range(count):
                stride = 2 if (stage > 0 and i == 0) else 1
                self.blocks.append(ResBlock(cin, cout, k, stride, rng))
                cin = cout
        self.head = Linear(cin, n_classes, np.random.default_rng([config.seed, 1]), std=0.01)

    def reset_head(self, seed: int) -> None:
        self.head = Linear(self.head.weight.shape[1], self.head.weight.shape[0], np.random.default_rng([seed, 2]),
                           std=0.01)

    def forward(self, x: Tensor) -> Tensor:
        h = self.stem_bn(self.stem(x)).relu()
        for block in self.blocks:
            h = block(h)
        return self.head(h.mean(axis=2))


def records_to_array(records: list[EcgRecord]) -> np.ndarray:
    out = []
    for r in records:
        r12 = r if r.n_leads == 12 else expand_to_twelve(r)
        out.append(r12.to_array(LEADS_12))
    return np.stack(out)


@dataclass
class ClassifierCheckpoint:
    config: ClassifierConfig
    vocabulary: ClassVocabulary
    params: dict
    val_trace: list[float] = field(default_factory=list)

    KIND = "classifier"

    def to_bytes(self) -> bytes:
        meta = {"kind": self.KIND, "config": self.config.to_dict(), "vocabulary": list(self.vocabulary.names),
                "val_trace": self.val_trace}
        return encode_container(meta, self.params)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ClassifierCheckpoint":
        meta, params = decode_container(buf)
        if meta.get("kind") != cls.KIND:
            raise CheckpointError(f"expected a classifier checkpoint, found {meta.get('kind')!r}")
        return cls(ClassifierConfig.from_dict(meta["config"]), ClassVocabulary(tuple(meta["vocabulary"])), params,
                   meta["val_trace"])

    def build_model(self) -> ResNet1d:
        model = ResNet1d(self.config, len(self.vocabulary))
        model.load_state_dict(self.params)
        return model.eval()


def predict_scores(model: ResNet1d, x: np.ndarray, batch_size: int = 128) -> np.ndarray:
    model.eval()
    outs = []
    with no_grad():
        for s in range(0, len(x), batch_size):
            outs.append(model(Tensor(x[s:s + batch_size])).sigmoid().data)
    return np.concatenate(outs) if outs else np.zeros((0, model.head.weight.shape[0]))


def _mean_auroc(scores: np.ndarray, targets: np.ndarray) -> float:
    per = per_class_auroc(scores, targets)
    return float(np.mean(list(per.values()))) if per else float("nan")


@dataclass
class TrainResult:
    checkpoint: ClassifierCheckpoint
    val_auroc: float
    model: ResNet1d


def train_classifier(train: list[EcgRecord], val: list[EcgRecord], vocabulary: ClassVocabulary,
                     config: ClassifierConfig, init: ResNet1d | None = None) -> TrainResult:
    """BCE training with AdamW; keeps the parameters of the best validation-AUROC epoch.

    ``init`` continues from an existing network (fine-tuning); otherwise a
    fresh one is built from ``config.seed``.
    """
    if not train or not val:
        raise ContractError(f"empty split: train has {len(train)} records, val has {len(val)}")
    x_tr, x_va = records_to_array(train), records_to_array(val)
    y_tr = vocabulary.multi_hot([r.labels for r in train])
    y_va = vocabulary.multi_hot([r.labels for r in val])
    const = [vocabulary.names[k] for k in range(y_tr.shape[1]) if y_tr[:, k].min() == y_tr[:, k].max()]
    if len(const) == y_tr.shape[1]:
        raise ContractError(f"train labels are constant for every class ({const}); nothing to learn")
    if not per_class_auroc(np.zeros(y_va.shape), y_va):
        raise ContractError("validation split has no class with both outcomes; AUROC is undefined")
    model = init if init is not None else ResNet1d(config, len(vocabulary), x_tr.shape[1])
    params = model.parameters()
    opt = make_optimizer("AdamW", params, config.learning_rate, config.weight_decay, 0)
    rng = np.random.default_rng([config.seed, 3])
    best, best_state, trace = -np.inf, model.state_dict(), []
    n = len(x_tr)
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(n)
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            if len(idx) < 2:
                continue  # batch statistics need at least two records
            logits = model(Tensor(x_tr[idx]))
            loss = F.binary_cross_entropy_with_logits(logits, y_tr[idx])
            model.zero_grad()
            loss.backward()
            optimizer_step(params, opt)
        score = _mean_auroc(predict_scores(model, x_va), y_va)
        trace.append(score)
        if score > best:
            best, best_state = score, model.state_dict()
    model.load_state_dict(best_state)
    model.eval()
    ck = ClassifierCheckpoint(config, vocabulary, best_state, trace)
    return TrainResult(ck, float(best), model)


def evaluate(model: ResNet1d, records: list[EcgRecord], vocabulary: ClassVocabulary) -> dict[str, float]:
    scores = predict_scores(model, records_to_array(records))
    targets = vocabulary.multi_hot([r.labels for r in records])
    return {vocabulary.names[k]: v for k, v in per_class_auroc(scores, targets).items()}
