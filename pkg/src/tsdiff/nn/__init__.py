"""Minimal differentiable-computation engine: kernels, gradients, Adam, checkpoints."""

from .checkpoint import (checkpoint_hash, load_checkpoint, save_checkpoint,
                         serialize)
from .optim import AdamState, adam_step
from .params import Parameter, ParameterSet, gradient_of, init_linear
from .tensor import (Tensor, add, concat, cross_entropy, dropout, gelu,
                     layer_norm, linear, matmul, mse, mul, no_grad, reshape,
                     scale, set_finite_checks, softmax, sub, tmean, transpose,
                     tsum)

__all__ = [
    "AdamState", "Parameter", "ParameterSet", "Tensor",
    "adam_step", "add", "checkpoint_hash", "concat", "cross_entropy",
    "dropout", "gelu", "gradient_of", "init_linear", "layer_norm", "linear",
    "load_checkpoint", "matmul", "mse", "mul", "no_grad", "reshape",
    "save_checkpoint", "scale", "serialize", "set_finite_checks", "softmax",
    "sub", "tmean", "transpose", "tsum",
]
