from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tensor, no_grad


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               coords: int | None = None, seed: int = 0) -> float:
    """Compare reverse-mode gradients of scalar ``f(*inputs)`` with central differences.

    Returns max |analytic - numeric| / max(1, |analytic|) over the checked
    coordinates. ``coords`` limits the check to that many randomly chosen
    coordinates per input; by default every coordinate is checked.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    out = f(*inputs)
    if out.size != 1:
        raise ContractError(f"grad_check needs a scalar function, got shape {out.shape}")
    out.backward()
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for t, a in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if coords is not None and coords < flat.size:
                idx = rng.choice(flat.size, size=coords, replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                fp = float(f(*inputs).data)
                flat[i] = orig - eps
                fm = float(f(*inputs).data)
                flat[i] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise NumericError(f"f is not finite at coordinate {i} of input {t.name or t.shape} (+/-{eps})")
                numeric = (fp - fm) / (2 * eps)
                ai = a.reshape(-1)[i]
                worst = max(worst, abs(ai - numeric) / max(1.0, abs(ai)))
    for t in inputs:
        t.grad = None
    return worst
