from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import dlm
from ..autograd import Tensor, clip_grad_norm, make_optimizer, optimizer_step
from ..ecg.preprocess import Normalizer, dequantize, quantize
from ..ecg.record import LEADS_8, ClassVocabulary, EcgRecord
from ..errors import ContractError, NumericError
from .config import ModelConfig, TrainConfig
from .network import ConditionalVAE, LatentHierarchy

log = logging.getLogger(__name__)


class TrainingDiverged(NumericError):
    """Raised when a loss term goes non-finite; carries the history so far."""

    def __init__(self, message: str, history: list[dict]):
        super().__init__(message)
        self.history = history


@dataclass
class ElboTerms:
    nll: Tensor  # [B]
    kl: list[Tensor]  # per group, each [B]
    total: Tensor  # scalar, batch mean
    kl_weight: float
    hierarchy: LatentHierarchy | None = None

    @property
    def kl_sum(self) -> np.ndarray:
        return np.sum([k.data for k in self.kl], axis=0)


def kl_weight_at(epoch_progress: float, warmup_epochs: float) -> float:
    """Linear ramp 0 -> 1 over the warmup epochs, then 1."""
    if warmup_epochs <= 0:
        return 1.0
    return float(min(1.0, max(0.0, epoch_progress / warmup_epochs)))


def elbo_loss(model: ConditionalVAE, bins: np.ndarray, labels, kl_weight: float,
              rng: np.random.Generator) -> ElboTerms:
    """Negative ELBO of quantized 8-lead targets ``[B, 8, T]`` under teacher forcing."""
    if not 0.0 <= kl_weight <= 1.0:
        raise ContractError(f"kl_weight must lie in [0, 1], got {kl_weight}")
    bits = model.config.bits
    x = Tensor(dequantize(bins, bits))
    hierarchy, raw = model.reconstruct_head(x, labels, rng)
    nll = -dlm.log_likelihood(dlm.unpack(raw), bins, bits)
    kls = hierarchy.kl_per_group()
    for i, kl in enumerate(kls):
        if not np.all(np.isfinite(kl.data)):
            raise NumericError(f"KL term of latent group {i} is not finite")
    total = nll
    if kl_weight:
        for kl in kls:
            total = total + kl * kl_weight
    total = total.mean()
    if not np.isfinite(total.data):
        raise NumericError("total loss is not finite")
    return ElboTerms(nll, kls, total, kl_weight, hierarchy)


@dataclass
class PreparedData:
    bins: np.ndarray  # [N, 8, T] int
    labels: np.ndarray  # [N]
    normalizer: Normalizer


def prepare_records(records: list[EcgRecord], config: ModelConfig,
                    normalizer: Normalizer | None = None) -> PreparedData:
    """Normalize with a fitted (or given) normalizer and quantize to ``config.bits``."""
    if not records:
        raise ContractError("training set is empty")
    lengths = {r.length for r in records}
    if lengths != {config.length}:
        raise ContractError(f"all records must have length {config.length}, got {sorted(lengths)}")
    norm = normalizer or Normalizer.fit(records)
    arr = np.stack([norm.apply(r).to_array(LEADS_8) for r in records])
    q = quantize(arr, config.bits)
    return PreparedData(q.bins, np.array([r.labels for r in records], dtype=np.int64), norm)


def train(records: list[EcgRecord], vocabulary: ClassVocabulary, config: ModelConfig,
          train_config: TrainConfig | None = None, normalizer: Normalizer | None = None,
          progress=None) -> "ModelCheckpoint":
    """Fit a conditional VAE; returns a checkpoint whose history has one row per epoch.

    History ``total`` is the unweighted negative ELBO (nll + sum of KL) per record;
    ``objective`` is the KL-weighted loss actually minimized.
    """
    from .checkpoint import ModelCheckpoint

    tc = train_config or TrainConfig()
    if len(vocabulary) != config.n_classes:
        raise ContractError(f"vocabulary has {len(vocabulary)} classes but the model expects {config.n_classes}")
    data = prepare_records(records, config, normalizer)
    for m in data.labels:
        vocabulary.check_mask(int(m))
    model = ConditionalVAE(config, seed=tc.seed)
    params = model.parameters()
    opt = make_optimizer("Adamax", params, tc.learning_rate, tc.weight_decay, tc.warmup_epochs)
    rng = np.random.default_rng([tc.seed, 1])
    n = len(data.bins)
    steps = max(1, -(-n // tc.batch_size))
    history: list[dict] = []
    for epoch in range(tc.epochs):
        order = rng.permutation(n)
        sums = np.zeros(4)
        kl_min = np.inf
        for step in range(steps):
            idx = order[step * tc.batch_size:(step + 1) * tc.batch_size]
            progress_now = epoch + step / steps
            weight = kl_weight_at(progress_now, tc.warmup_epochs)
            try:
                terms = elbo_loss(model, data.bins[idx], data.labels[idx], weight, rng)
            except NumericError as exc:
                raise TrainingDiverged(f"epoch {epoch + 1}, step {step + 1}: {exc}", history) from exc
            model.zero_grad()
            terms.total.backward()
            clip_grad_norm(params, tc.grad_clip)
            optimizer_step(params, opt, progress_now)
            kl = terms.kl_sum
            kl_min = min(kl_min, min(float(k.data.min()) for k in terms.kl))
            sums += [terms.nll.data.sum(), kl.sum(), (terms.nll.data + kl).sum(), float(terms.total.data) * len(idx)]
        row = {"epoch": epoch + 1, "nll": sums[0] / n, "kl": sums[1] / n, "total": sums[2] / n,
               "objective": sums[3] / n, "kl_min": kl_min, "kl_weight": kl_weight_at(epoch + 1, tc.warmup_epochs)}
        row = {k: (float(v) if k != "epoch" else v) for k, v in row.items()}
        history.append(row)
        log.info("epoch %d nll %.2f kl %.2f total %.2f", row["epoch"], row["nll"], row["kl"], row["total"])
        if progress is not None:
            progress(row)
    return ModelCheckpoint(config, vocabulary, data.normalizer, model.state_dict(), history)
