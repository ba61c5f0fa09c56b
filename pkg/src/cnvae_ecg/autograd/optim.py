"""Adamax and AdamW with a linear learning-rate warmup, plus global-norm clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .nn import Parameter


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    weight_decay: float = 0.0
    warmup_epochs: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("Adamax", "AdamW"):
            raise ContractError(f"unknown optimizer kind {self.kind!r}; expected Adamax or AdamW")

    def lr_at(self, epoch_progress: float | None) -> float:
        """Learning rate after ``epoch_progress`` epochs; ramps 0 -> lr across the warmup window."""
        if not self.warmup_epochs or epoch_progress is None:
            return self.learning_rate
        return self.learning_rate * min(1.0, max(epoch_progress, 0.0) / self.warmup_epochs)


def make_optimizer(kind: str, params: list[Parameter], learning_rate: float, weight_decay: float = 0.0,
                   warmup_epochs: float = 0.0) -> OptimizerState:
    state = OptimizerState(kind, learning_rate, weight_decay, warmup_epochs)
    state.first_moment = [np.zeros_like(p.data) for p in params]
    state.second_moment = [np.zeros_like(p.data) for p in params]
    return state


def optimizer_step(params: list[Parameter], state: OptimizerState, epoch_progress: float | None = None) -> None:
    """Apply one in-place update to ``params``.

    Adamax follows the usual convention of coupled (L2) weight decay and an
    infinity-norm second moment; AdamW decays the weights directly.
    """
    if len(params) != len(state.first_moment):
        raise ContractError(f"optimizer tracks {len(state.first_moment)} parameters, got {len(params)}")
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"parameter {p.name or i} has no gradient")
        if state.first_moment[i].shape != p.shape:
            raise ContractError(f"parameter {p.name or i}: moment buffer shape {state.first_moment[i].shape} != {p.shape}")

    state.step_count += 1
    t = state.step_count
    lr = state.lr_at(epoch_progress)
    b1, b2, eps, wd = state.beta1, state.beta2, state.eps, state.weight_decay
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        if state.kind == "Adamax":
            if wd:
                g = g + wd * p.data
            m *= b1
            m += (1 - b1) * g
            np.maximum(b2 * v, np.abs(g) + eps, out=v)
            p.data -= (lr / (1 - b1**t)) * m / v
        else:
            if wd:
                p.data *= 1 - lr * wd
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**t)
            vhat = v / (1 - b2**t)
            p.data -= lr * mhat / (np.sqrt(vhat) + eps)


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total
