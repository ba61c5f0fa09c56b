"""Conditional hierarchical VAE: network, ELBO training, checkpoints and generation."""
from .checkpoint import CheckpointError, ModelCheckpoint, decode_container, encode_container
from .config import ModelConfig, TrainConfig
from .generation import CheckpointGenerator, generate
from .network import (ConditionalVAE, GroupStats, LatentHierarchy, gaussian_kl, residual_kl,
                      soft_clamp)
from .training import (ElboTerms, PreparedData, TrainingDiverged, elbo_loss, kl_weight_at,
                       prepare_records, train)

__all__ = [
    "CheckpointError", "ModelCheckpoint", "decode_container", "encode_container",
    "ModelConfig", "TrainConfig", "CheckpointGenerator", "generate",
    "ConditionalVAE", "GroupStats", "LatentHierarchy", "gaussian_kl", "residual_kl", "soft_clamp",
    "ElboTerms", "PreparedData", "TrainingDiverged", "elbo_loss", "kl_weight_at", "prepare_records", "train",
]
