"""Conditional hierarchical VAE over 8-lead ECG.

The encoder runs bottom-up and leaves one feature map per latent group. The
decoder runs top-down from a learned top map ``h`` enriched with the class
embedding; each group draws a Normal prior from the running state and, when
training, a residual posterior from the matching encoder features.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import dlm
from ..autograd import Tensor, functional as F
from ..autograd.nn import Conv1d, ConvTranspose1d, Linear, Module, Parameter, truncated_normal
from ..errors import ContractError
from .config import ModelConfig

SOFT_CLAMP = 5.0


def soft_clamp(x: Tensor, bound: float = SOFT_CLAMP) -> Tensor:
    return (x * (1.0 / bound)).tanh() * bound


def gaussian_kl(mu_q, log_sigma_q, mu_p, log_sigma_p):
    """KL(q || p) between diagonal Normals, elementwise; Tensors or plain numbers."""
    if not any(isinstance(a, Tensor) for a in (mu_q, log_sigma_q, mu_p, log_sigma_p)):
        var_ratio = 2.0 * (np.asarray(log_sigma_q, dtype=np.float64) - log_sigma_p)
        diff = (np.asarray(mu_q, dtype=np.float64) - mu_p) * np.exp(-np.asarray(log_sigma_p, dtype=np.float64))
        return 0.5 * (np.expm1(var_ratio) - var_ratio + diff * diff)
    var_ratio = (log_sigma_q - log_sigma_p) * 2.0
    diff = (mu_q - mu_p) * (log_sigma_p * -1.0).exp()
    return (var_ratio.expm1() - var_ratio + diff * diff) * 0.5


def residual_kl(delta_mu: Tensor, delta_log_sigma: Tensor, log_sigma_p: Tensor) -> Tensor:
    """KL between ``N(mu_p + dmu, sigma_p e^dl)`` and ``N(mu_p, sigma_p)``; exactly 0 when both deltas are 0."""
    two = delta_log_sigma * 2.0
    scaled = delta_mu * (log_sigma_p * -1.0).exp()
    return (two.expm1() - two + scaled * scaled) * 0.5


@dataclass
class GroupStats:
    prior_mu: Tensor
    prior_log_sigma: Tensor
    post_mu: Tensor | None
    post_log_sigma: Tensor | None
    z: Tensor
    kl: Tensor | None  # [B]


@dataclass
class LatentHierarchy:
    groups: list[GroupStats]

    def kl_per_group(self) -> list[Tensor]:
        return [g.kl for g in self.groups]

    def __len__(self) -> int:
        return len(self.groups)


class ResidualCell(Module):
    def __init__(self, channels: int, kernel: int, rng: np.random.Generator):
        self.conv1 = Conv1d(channels, channels, kernel, rng)
        self.conv2 = Conv1d(channels, channels, kernel, rng)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.conv2(self.conv1(x.silu()).silu())


class DownCell(Module):
    """Halves the time axis: average-pool skip plus a strided conv branch."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv = Conv1d(channels, channels, 4, rng, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return F.avg_pool1d(x, 2) + self.conv(x.silu())


class UpCell(Module):
    """Doubles the time axis: nearest-neighbour skip plus a transposed conv branch."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv = ConvTranspose1d(channels, channels, 4, rng, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return F.upsample_nearest(x, 2) + self.conv(x.silu())


class CellStack(Module):
    def __init__(self, channels: int, kernel: int, count: int, rng: np.random.Generator):
        self.cells = [ResidualCell(channels, kernel, rng) for _ in range(count)]

    def forward(self, x: Tensor) -> Tensor:
        for cell in self.cells:
            x = cell(x)
        return x


class DecoderGroup(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, first: bool):
        c, zc, k = cfg.width, cfg.latent_channels, cfg.kernel
        self.cells = [] if first else [ResidualCell(c, k, rng) for _ in range(cfg.cells_per_group)]
        self.prior = Conv1d(c, 2 * zc, k, rng)
        self.mix = Conv1d(c, c, 1, rng)
        self.posterior = Conv1d(c, 2 * zc, k, rng)
        self.inject = Conv1d(zc, c, 1, rng)


class ConditionalVAE(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        cfg = config
        c, k = cfg.width, cfg.kernel
        self.embedding = Parameter(truncated_normal(rng, (cfg.n_classes, cfg.embed_dim)))
        # encoder
        self.stem = Conv1d(dlm.N_LEADS, c, k, rng)
        self.stem_condition = Linear(cfg.embed_dim, c, rng, bias=False)
        self.pre = [ResidualCell(c, k, rng) for _ in range(cfg.pre_cells)]
        self.enc_cells = [CellStack(c, k, cfg.cells_per_group, rng) for _ in range(cfg.n_groups)]
        self.down = [DownCell(c, rng) for _ in range(cfg.scales - 1)]
        # decoder
        coarse = cfg.length // cfg.downsample
        self.top = Parameter(truncated_normal(rng, (cfg.top_dim, coarse)))
        self.top_condition = Linear(cfg.embed_dim, cfg.top_dim, rng, bias=False)
        self.top_gain = Linear(cfg.embed_dim, cfg.top_dim, rng, bias=False)
        self.top_proj = Conv1d(cfg.top_dim, c, 1, rng)
        self.dec = [DecoderGroup(cfg, rng, first=(i == 0)) for i in range(cfg.n_groups)]
        self.up = [UpCell(c, rng) for _ in range(cfg.scales - 1)]
        self.post = [ResidualCell(c, k, rng) for _ in range(cfg.post_cells)]
        self.head = Conv1d(c, dlm.head_channels(cfg.n_components), cfg.head_kernel, rng)
        self.head.weight.data[...] = 0.0

    # ---- bookkeeping ----------------------------------------------------
    def group_scales(self) -> list[int]:
        """Scale index (0 = coarsest) of every decoder group, in decoder order."""
        return [s for s, g in enumerate(self.config.groups_per_scale) for _ in range(g)]

    def group_length(self, group: int) -> int:
        s = self.group_scales()[group]
        return self.config.length // 2 ** (self.config.scales - 1 - s)

    # ---- condition ------------------------------------------------------
    def label_matrix(self, labels) -> np.ndarray:
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        n = self.config.n_classes
        if np.any(labels < 0) or np.any(labels >> n):
            bad = int(labels[(labels < 0) | (labels >> n != 0)][0])
            raise ContractError(f"label mask {bad:#x} has bits outside the {n}-class vocabulary")
        return ((labels[:, None] >> np.arange(n)) & 1).astype(np.float64)

    def embed_condition(self, labels) -> Tensor:
        """Sum of embedding rows over the set bits, ``[B, embed_dim]``."""
        return Tensor(self.label_matrix(labels)) @ self.embedding

    # ---- encoder --------------------------------------------------------
    def encode(self, x: Tensor, c: Tensor) -> list[Tensor]:
        cfg = self.config
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 3 or x.shape[1] != dlm.N_LEADS:
            raise ContractError(f"encoder input must be [B, 8, T], got {x.shape}")
        if x.shape[2] % cfg.downsample:
            raise ContractError(
                f"signal length {x.shape[2]} must be divisible by 2**(scales-1) = {cfg.downsample}")
        s = self.stem(x) + self.stem_condition(c).reshape(x.shape[0], cfg.width, 1)
        for cell in self.pre:
            s = cell(s)
        feats = []
        group = cfg.n_groups - 1
        for scale in reversed(range(cfg.scales)):
            for _ in range(cfg.groups_per_scale[scale]):
                s = self.enc_cells[group](s)
                feats.append(s)
                group -= 1
            if scale > 0:
                s = self.down[scale - 1](s)
        return feats[::-1]

    # ---- decoder --------------------------------------------------------
    def top_input(self, c: Tensor) -> Tensor:
        # the class gates the positional channels of h and shifts them
        b, d = c.shape[0], self.config.top_dim
        gain = self.top_gain(c).reshape(b, d, 1) + 1.0
        h = self.top.reshape(1, d, -1) * gain + self.top_condition(c).reshape(b, d, 1)
        return self.top_proj(h)

    def top_down(self, pyramid: list[Tensor] | None, c: Tensor, mode: str = "train",
                 rng: np.random.Generator | None = None, tau: float = 1.0) -> tuple[LatentHierarchy, Tensor]:
        cfg = self.config
        if mode not in ("train", "generate"):
            raise ContractError(f"mode must be 'train' or 'generate', got {mode!r}")
        if mode == "train" and pyramid is None:
            raise ContractError("train mode needs the encoder pyramid")
        if mode == "generate" and pyramid is not None:
            raise ContractError("generate mode takes no encoder pyramid")
        if tau <= 0:
            raise ContractError(f"temperature must be positive, got {tau}")
        if pyramid is not None and len(pyramid) != cfg.n_groups:
            raise ContractError(f"pyramid has {len(pyramid)} levels, expected {cfg.n_groups}")
        rng = rng if rng is not None else np.random.default_rng(0)
        zc = cfg.latent_channels
        scales = self.group_scales()
        s = self.top_input(c)
        b = s.shape[0]
        groups = []
        for i, block in enumerate(self.dec):
            if i > 0 and scales[i] != scales[i - 1]:
                s = self.up[scales[i] - 1](s)
            for cell in block.cells:
                s = cell(s)
            prior = block.prior(s.silu())
            mu_p, ls_p = prior[:, :zc], soft_clamp(prior[:, zc:])
            eps = rng.standard_normal((b, zc, s.shape[2]))
            if mode == "train":
                feat = pyramid[i]
                if feat.shape != s.shape:
                    raise ContractError(f"group {i}: encoder features {feat.shape} do not match decoder state {s.shape}")
                delta = block.posterior((feat + block.mix(s)).silu())
                d_mu, d_ls = delta[:, :zc], soft_clamp(delta[:, zc:])
                mu_q, ls_q = mu_p + d_mu, ls_p + d_ls
                z = mu_q + ls_q.exp() * eps
                kl = residual_kl(d_mu, d_ls, ls_p).sum(axis=(1, 2))
                groups.append(GroupStats(mu_p, ls_p, mu_q, ls_q, z, kl))
            else:
                z = mu_p + ls_p.exp() * (eps * tau)
                groups.append(GroupStats(mu_p, ls_p, None, None, z, None))
            s = s + block.inject(z)
        for cell in self.post:
            s = cell(s)
        return LatentHierarchy(groups), self.head(s.silu())

    def reconstruct_head(self, x: Tensor, labels, rng: np.random.Generator) -> tuple[LatentHierarchy, Tensor]:
        c = self.embed_condition(labels)
        return self.top_down(self.encode(x, c), c, "train", rng)

    def generate_head(self, labels, rng: np.random.Generator, tau: float = 1.0) -> tuple[LatentHierarchy, Tensor]:
        c = self.embed_condition(labels)
        return self.top_down(None, c, "generate", rng, tau)
