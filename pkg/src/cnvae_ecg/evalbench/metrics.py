from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import ContractError


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: share of (positive, negative) pairs ranked correctly, ties counting 1/2."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ContractError(f"scores {scores.shape} and labels {labels.shape} differ in length")
    if not np.all(np.isin(labels, (0, 1))):
        raise ContractError("labels must be binary 0/1")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUROC needs both classes present")
    if not np.all(np.isfinite(scores)):
        raise ContractError("scores must be finite")
    # average ranks are multiples of 1/2, so the pair count below is exact
    ranks = rankdata(scores, method="average")
    wins = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(wins / (n_pos * n_neg))


def per_class_auroc(scores: np.ndarray, targets: np.ndarray) -> dict[int, float]:
    """AUROC for every class column that has both outcomes present."""
    scores, targets = np.asarray(scores), np.asarray(targets)
    out = {}
    for k in range(targets.shape[1]):
        col = targets[:, k]
        if 0 < col.sum() < len(col):
            out[k] = auroc(scores[:, k], col)
    return out
