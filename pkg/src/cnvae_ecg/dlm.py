"""Mixture of discretized logistics over the eight independent ECG leads.

Lead order is I, III, V1..V6. One mixture component is drawn per timestep and
shared by all leads; within a component the leads form a cascade in which
III depends on I and every chest lead V_k on V_1..V_{k-1}, while V1 starts
fresh. Locations couple through the resolved lead *values*, log-scales
through the earlier leads' raw log-scales.

Raw head layout, for ``[B, 33K, T]`` viewed as ``[B, 33, K, T]``::

    row 0       mixture logits
    rows 1-8    locations, one row per lead
    rows 9-16   log-scales, one row per lead (clamped to [-7, 7])
    row 17      beta   (III <- I), tanh-squashed
    rows 18-32  alpha_{j->k} for chest leads, ordered by target k then source j, tanh-squashed
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, concat, stack
from .ecg.preprocess import bin_width, dequantize
from .ecg.record import LEADS_8
from .errors import ContractError, NumericError

N_LEADS = 8
N_FIELDS = 33
LOG_SCALE_MIN, LOG_SCALE_MAX = -7.0, 7.0
# (source, target) chest-lead pairs, 0-based within V1..V6
CHEST_PAIRS = tuple((j, k) for k in range(1, 6) for j in range(k))
_PAIR_ROW = {pair: i for i, pair in enumerate(CHEST_PAIRS)}


@dataclass
class MixtureParams:
    logits: Tensor  # [B, K, T]
    loc: Tensor  # [B, 8, K, T]
    log_scale: Tensor  # [B, 8, K, T]
    beta: Tensor  # [B, K, T]
    alpha: Tensor  # [B, 15, K, T]

    @property
    def n_components(self) -> int:
        return self.logits.shape[1]

    @property
    def batch(self) -> int:
        return self.logits.shape[0]

    @property
    def length(self) -> int:
        return self.logits.shape[2]


def head_channels(n_components: int) -> int:
    return N_FIELDS * n_components


def unpack(raw: Tensor) -> MixtureParams:
    raw = raw if isinstance(raw, Tensor) else Tensor(raw)
    if raw.ndim != 3:
        raise ContractError(f"head output must be [B, 33K, T], got shape {raw.shape}")
    b, c, t = raw.shape
    if c == 0 or c % N_FIELDS:
        raise ContractError(f"head output has {c} channels; expected 33*K for some K >= 1")
    k = c // N_FIELDS
    r = raw.reshape(b, N_FIELDS, k, t)
    return MixtureParams(
        logits=r[:, 0],
        loc=r[:, 1:9],
        log_scale=r[:, 9:17].clamp(LOG_SCALE_MIN, LOG_SCALE_MAX),
        beta=r[:, 17].tanh(),
        alpha=r[:, 18:33].tanh(),
    )


def repack(params: MixtureParams) -> np.ndarray:
    """Inverse of :func:`unpack` for in-range log-scales."""
    b, k, t = params.logits.shape
    rows = [
        params.logits.data[:, None],
        params.loc.data,
        params.log_scale.data,
        np.arctanh(params.beta.data)[:, None],
        np.arctanh(params.alpha.data),
    ]
    return np.concatenate(rows, axis=1).reshape(b, N_FIELDS * k, t)


def _cascade_terms(lead: int, loc, log_scale, beta, alpha, ref):
    """Effective (location, log-scale) of one lead.

    ``loc``/``log_scale``/``alpha`` are indexed on axis 1 by lead/pair, ``ref(j)``
    returns the resolved value of lead ``j`` broadcastable against them. Works on
    Tensors and plain arrays alike.
    """
    mu, lam = loc[:, lead], log_scale[:, lead]
    if lead == 1:
        mu = mu + beta * ref(0)
        lam = lam + beta * log_scale[:, 0]
    elif lead >= 3:
        k = lead - 2
        for j in range(k):
            a = alpha[:, _PAIR_ROW[(j, k)]]
            mu = mu + a * ref(j + 2)
            lam = lam + a * log_scale[:, j + 2]
    return mu, lam


def _reference_getter(reference, component_axis: bool):
    if isinstance(reference, dict):
        def get(j):
            name = LEADS_8[j]
            if name not in reference:
                raise ContractError(f"cascade reference is missing lead {name}")
            v = np.asarray(reference[name], dtype=np.float64)
            return v[:, None, :] if component_axis else v
        return get
    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim != 3 or ref.shape[1] != N_LEADS:
        raise ContractError(f"cascade reference must be [B, 8, T], got {ref.shape}")
    return (lambda j: ref[:, j, None, :]) if component_axis else (lambda j: ref[:, j])


def effective_params(params: MixtureParams, reference) -> tuple[Tensor, Tensor]:
    """Per-lead effective locations and log-scales, each ``[B, 8, K, T]``.

    ``reference`` holds the resolved lead values, either ``[B, 8, T]`` or a
    mapping from lead name to ``[B, T]``; only leads earlier in the cascade
    are read.
    """
    get = _reference_getter(reference, component_axis=True)
    mus, lams = [], []
    for lead in range(N_LEADS):
        mu, lam = _cascade_terms(lead, params.loc, params.log_scale, params.beta, params.alpha, get)
        mus.append(mu)
        lams.append(lam)
    return stack(mus, axis=1), stack(lams, axis=1)


def log_bin_probs(x: np.ndarray, mu: Tensor, log_scale: Tensor, bits: int) -> Tensor:
    """log P(bin containing x) under a discretized logistic, with open tails at the edge bins.

    ``x`` must be bin centers; shapes broadcast.
    """
    half = bin_width(bits) / 2
    inv_s = (-log_scale).exp()
    centered = -mu + x
    upper = (centered + half) * inv_s
    lower = (centered - half) * inv_s
    low_edge = (x <= -1.0 + half * 1.5).astype(np.float64)
    high_edge = (x >= 1.0 - half * 1.5).astype(np.float64)
    # sigma(u) - sigma(l) = sigma(u) * sigma(-l) * (1 - exp(-(u - l)))
    log_cdf_up = upper.log_sigmoid() * (1.0 - high_edge)
    log_sf_low = (-lower).log_sigmoid() * (1.0 - low_edge)
    log_width = (-(inv_s * (2 * half))).log1mexp() * ((1.0 - low_edge) * (1.0 - high_edge))
    return log_cdf_up + log_sf_low + log_width


def log_likelihood(params: MixtureParams, target_bins: np.ndarray, bits: int) -> Tensor:
    """Per-record log-probability ``[B]`` of quantized 8-lead targets ``[B, 8, T]`` (teacher forcing)."""
    target_bins = np.asarray(target_bins)
    b, k, t = params.logits.shape
    if target_bins.shape != (b, N_LEADS, t):
        raise ContractError(f"targets must be [B, 8, T] = {(b, N_LEADS, t)}, got {target_bins.shape}")
    if target_bins.min(initial=0) < 0 or target_bins.max(initial=0) >= 1 << bits:
        raise ContractError(f"target bins must lie in [0, {(1 << bits) - 1}]")
    x = dequantize(target_bins, bits)
    mu, lam = effective_params(params, x)
    lp = log_bin_probs(x[:, :, None, :], mu, lam, bits)  # [B, 8, K, T]
    joint = params.logits.log_softmax(axis=1) + lp.sum(axis=1)  # [B, K, T]
    per_step = joint.logsumexp(axis=1)  # [B, T]
    bad = ~np.isfinite(per_step.data)
    if bad.any():
        rec, step = map(int, np.argwhere(bad)[0])
        raise NumericError(f"log-likelihood is not finite at record {rec}, timestep {step}")
    return per_step.sum(axis=1)


def lead_pmf(logits: np.ndarray, mu: np.ndarray, log_scale: np.ndarray, bits: int) -> np.ndarray:
    """Marginal bin probabilities of one lead's mixture, given effective params ``[K]``."""
    centers = dequantize(np.arange(1 << bits), bits)
    lp = log_bin_probs(centers[None, :], Tensor(np.asarray(mu)[:, None]), Tensor(np.asarray(log_scale)[:, None]), bits)
    w = Tensor(np.asarray(logits, dtype=np.float64)).log_softmax(axis=0).data
    return np.exp(lp.data + w[:, None]).sum(axis=0)


def _logit(u: np.ndarray) -> np.ndarray:
    return np.log(u) - np.log1p(-u)


def draw_components(params: MixtureParams, rng: np.random.Generator, tau: float = 1.0) -> np.ndarray:
    logits = params.logits.data / tau
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    cdf = np.cumsum(w / w.sum(axis=1, keepdims=True), axis=1)  # [B, K, T]
    u = rng.random((params.batch, 1, params.length))
    return np.minimum((u > cdf).sum(axis=1), params.n_components - 1)


def cascade_from_uniforms(params: MixtureParams, components: np.ndarray, u: np.ndarray,
                          tau: float = 1.0, clamp: bool = True) -> np.ndarray:
    """Resolve the 8-lead cascade by inverse-CDF sampling with given components ``[B, T]`` and uniforms ``[B, 8, T]``."""
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    comp = np.asarray(components)[:, None, None, :]

    def pick(a):  # [B, R, K, T] -> [B, R, T]
        return np.take_along_axis(a, np.broadcast_to(comp, a.shape[:2] + (1, a.shape[3])), axis=2)[:, :, 0]

    loc = pick(params.loc.data)
    lam = pick(params.log_scale.data)
    beta = pick(params.beta.data[:, None])[:, 0]
    alpha = pick(params.alpha.data)
    noise = _logit(np.asarray(u, dtype=np.float64))
    out = np.zeros(loc.shape)
    for lead in range(N_LEADS):
        mu, lam_hat = _cascade_terms(lead, loc, lam, beta, alpha, lambda j: out[:, j])
        x = mu + np.exp(lam_hat) * tau * noise[:, lead]
        out[:, lead] = np.clip(x, -1.0, 1.0) if clamp else x
    return out


def sample_cascade(params: MixtureParams, rng: np.random.Generator | int, tau: float = 1.0,
                   clamp: bool = True) -> np.ndarray:
    """Draw continuous 8-lead signals ``[B, 8, T]``; deterministic for a given seed."""
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    comp = draw_components(params, rng, tau)
    u = rng.random((params.batch, N_LEADS, params.length))
    u = np.clip(u, 1e-12, 1 - 1e-12)
    return cascade_from_uniforms(params, comp, u, tau, clamp)
