from .tensor import Tensor, concat, no_grad, stack, where
from . import functional
from .functional import conv1d, conv_transpose1d
from .gradcheck import grad_check
from .nn import BatchNorm1d, Conv1d, ConvTranspose1d, Linear, Module, Parameter
from .optim import OptimizerState, clip_grad_norm, make_optimizer, optimizer_step

__all__ = [
    "Tensor", "concat", "stack", "where", "no_grad", "functional", "conv1d", "conv_transpose1d",
    "grad_check", "Module", "Parameter", "Conv1d", "ConvTranspose1d", "Linear", "BatchNorm1d",
    "OptimizerState", "make_optimizer", "optimizer_step", "clip_grad_norm",
]
