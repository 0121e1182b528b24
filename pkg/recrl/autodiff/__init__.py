"""
Minimal reverse-mode automatic differentiation.

tensor      -> DifferentiableArray, Tape, no_grad and backward.
functional  -> the differentiable operations used by the encoders and the losses.
optim       -> AdamState and adam_step.
gradcheck   -> finite-difference verification of tape gradients.
"""
from recrl.autodiff.tensor import (
    DifferentiableArray,
    Tape,
    array_create,
    backward,
    constant,
    current_tape,
    no_grad,
    parameter,
)
from recrl.autodiff.optim import AdamState, adam_step, zero_grad

__all__ = [
    "AdamState",
    "DifferentiableArray",
    "Tape",
    "adam_step",
    "array_create",
    "backward",
    "constant",
    "current_tape",
    "no_grad",
    "parameter",
    "zero_grad",
]
