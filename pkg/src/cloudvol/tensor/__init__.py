"""Reverse-mode autodiff on numpy arrays, with optional compiled kernels."""

from .adam import Adam
from .backend import kernel_backend
from .core import DEFAULT_DTYPE, ShapeError, Tensor, backward, grad_enabled, no_grad
from .gradcheck import check_all_ops, check_loss_grads, grad_check
from . import nn, ops
from .ops import OP_KINDS, forward_op

__all__ = [
    "Adam", "DEFAULT_DTYPE", "OP_KINDS", "ShapeError", "Tensor", "backward",
    "check_all_ops", "check_loss_grads", "forward_op", "grad_check",
    "grad_enabled", "kernel_backend", "nn", "no_grad", "ops",
]
