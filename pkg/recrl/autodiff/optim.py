"""Adam optimizer over named parameter collections."""
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from recrl.autodiff.tensor import DifferentiableArray
from recrl.exceptions import ShapeError

Parameters = Mapping[str, DifferentiableArray]


@dataclass
class AdamState:
    """First and second moment buffers of one parameter collection.

    Attributes
    ----------
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int
        Number of steps taken so far.
    beta1, beta2, eps: float
        Defaults 0.9, 0.999 and 1e-8.
    learning_rate: float
    """

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 0.005

    @classmethod
    def for_parameters(cls, params: Parameters, learning_rate: float = 0.005) -> "AdamState":
        """Zero moments shaped like ``params``."""
        return cls(
            m={name: np.zeros_like(p.values) for name, p in params.items()},
            v={name: np.zeros_like(p.values) for name, p in params.items()},
            learning_rate=learning_rate,
        )


def adam_step(params: Parameters, state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place, then reset the gradients to zero.

    Raises
    ------
    ShapeError
        If the parameter names or shapes do not match the state buffers.
    """
    if set(params) != set(state.m) or set(params) != set(state.v):
        raise ShapeError("Adam state was built for a different set of parameters.")
    for name, param in params.items():
        if state.m[name].shape != param.shape or state.v[name].shape != param.shape:
            raise ShapeError(
                f"Adam state for {name!r} has shape {state.m[name].shape}, "
                f"parameter has {param.shape}."
            )
    state.t += 1
    first_correction = 1.0 - state.beta1 ** state.t
    second_correction = 1.0 - state.beta2 ** state.t
    for name, param in params.items():
        grad = param.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / first_correction
        v_hat = v / second_correction
        param.values -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
        param.zero_grad()


def zero_grad(params: Parameters) -> None:
    for param in params.values():
        param.zero_grad()
