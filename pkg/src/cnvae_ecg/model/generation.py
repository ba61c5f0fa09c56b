from __future__ import annotations

import numpy as np

from .. import dlm
from ..autograd import no_grad
from ..ecg.leads import expand_to_twelve
from ..ecg.record import LEADS_8, ClassVocabulary, EcgRecord
from ..errors import ContractError
from .checkpoint import ModelCheckpoint


def generate(checkpoint: ModelCheckpoint, labels: int, count: int, tau: float = 1.0, seed: int = 0,
             batch_size: int = 32, vocabulary: ClassVocabulary | None = None, model=None) -> list[EcgRecord]:
    """Draw ``count`` 12-lead records conditioned on the ``labels`` bitmask.

    Deterministic for a given (checkpoint, labels, count, tau, seed, batch_size).
    """
    if vocabulary is not None and tuple(vocabulary.names) != tuple(checkpoint.vocabulary.names):
        raise ContractError(f"vocabulary {vocabulary.names} does not match the checkpoint's "
                            f"{checkpoint.vocabulary.names}")
    checkpoint.vocabulary.check_mask(int(labels))
    if count < 0:
        raise ContractError(f"count must be >= 0, got {count}")
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    if count == 0:
        return []
    model = model or checkpoint.build_model()
    cfg = checkpoint.config
    rng = np.random.default_rng([seed, int(labels)])
    out = []
    with no_grad():
        for start in range(0, count, batch_size):
            b = min(batch_size, count - start)
            _, raw = model.generate_head(np.full(b, labels), rng, tau)
            x = dlm.sample_cascade(dlm.unpack(raw), rng, tau)
            amps = checkpoint.normalizer.invert_array(x, LEADS_8)
            for rec in amps:
                r8 = EcgRecord.from_array(rec, cfg.fs, int(labels), LEADS_8, generated=True)
                r12 = expand_to_twelve(r8)
                r12.generated = True
                out.append(r12)
    return out


class CheckpointGenerator:
    """Adapts a trained checkpoint to the ``(labels, count, seed) -> records`` generator protocol."""

    def __init__(self, checkpoint: ModelCheckpoint, tau: float = 1.0, eight_leads: bool = False):
        self.checkpoint, self.tau, self.eight_leads = checkpoint, tau, eight_leads
        self.model = checkpoint.build_model()
        self.name = "cnvae"

    def __call__(self, labels: int, count: int, seed: int) -> list[EcgRecord]:
        recs = generate(self.checkpoint, labels, count, self.tau, seed, model=self.model)
        if self.eight_leads:
            recs = [EcgRecord({k: r.leads[k] for k in LEADS_8}, r.fs, r.labels, True) for r in recs]
        return recs
