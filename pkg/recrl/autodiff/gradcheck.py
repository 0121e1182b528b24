"""Central finite-difference gradient checks against the tape."""
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from recrl.autodiff.tensor import DifferentiableArray, Tape, no_grad

LossFunction = Callable[[], DifferentiableArray]


def numerical_gradient(
    loss_fn: LossFunction,
    param: DifferentiableArray,
    h: float = 1e-5,
    flat_indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(f(x+h) - f(x-h)) / 2h for the selected entries of ``param``; other entries stay 0."""
    numeric = np.zeros(param.size)
    flat_values = param.values.reshape(-1)
    indices = np.arange(param.size) if flat_indices is None else flat_indices
    with no_grad():
        for i in indices:
            original = flat_values[i]
            flat_values[i] = original + h
            upper = loss_fn().item()
            flat_values[i] = original - h
            lower = loss_fn().item()
            flat_values[i] = original
            numeric[i] = (upper - lower) / (2.0 * h)
    return numeric.reshape(param.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denominator


def check_gradients(
    loss_fn: LossFunction,
    params: Mapping[str, DifferentiableArray],
    h: float = 1e-5,
    floor: float = 1e-6,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> Dict[str, float]:
    """Largest relative error between tape and finite-difference gradients, per parameter.

    Parameters
    ----------
    loss_fn: callable
        Builds the scalar loss from the current parameter values.
    params: mapping
        Named parameters to check.
    max_entries: int, optional
        Check at most this many randomly chosen entries of every parameter.
    """
    for param in params.values():
        param.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for name, param in params.items():
        if max_entries is not None and param.size > max_entries:
            chosen = np.sort(rng.choice(param.size, size=max_entries, replace=False))
        else:
            chosen = np.arange(param.size)
        analytic = param.grad.reshape(-1)[chosen]
        numeric = numerical_gradient(loss_fn, param, h=h, flat_indices=chosen).reshape(-1)[
            chosen
        ]
        errors[name] = float(relative_error(analytic, numeric, floor).max(initial=0.0))
    for param in params.values():
        param.zero_grad()
    return errors
