"""Tensor, autodiff, layers, optimizer, gradient checking, checkpoints."""

from .tensor import Tensor, as_tensor, concat, stack, pad, conv1d, conv2d, upsample_nearest, no_grad
from .layers import LayerSpec, NetworkSpec, init_params, evaluate_network, dense
from .optim import OptimState, adam_step
from .gradcheck import backprop_gradients, gradients, finite_difference_check, finite_difference_check_network
from .checkpoint import save_checkpoint, load_checkpoint, restore_into
from . import rng

__all__ = [
    "Tensor", "as_tensor", "concat", "stack", "pad", "conv1d", "conv2d", "upsample_nearest", "no_grad",
    "LayerSpec", "NetworkSpec", "init_params", "evaluate_network", "dense",
    "OptimState", "adam_step",
    "backprop_gradients", "gradients", "finite_difference_check", "finite_difference_check_network",
    "save_checkpoint", "load_checkpoint", "restore_into",
    "rng",
]
