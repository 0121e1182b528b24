"""
Differentiable operations.

Every function takes DifferentiableArray inputs, computes the forward values with numpy and, when a
tape is active and some input requires a gradient, records a rule mapping the output gradient to
the input gradients. Binary elementwise operations require equal shapes: the only implicit
broadcast is multiplication by a python scalar (scale) and the explicit row broadcast of add_bias.
"""
import logging
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from recrl.autodiff.tensor import BackwardRule, DifferentiableArray, current_tape
from recrl.exceptions import IndexLookupError, NumericError, ShapeError
from recrl.utils import ListEnum

logger = logging.getLogger(__name__)

COSINE_EPS = 1e-8

Target = Union[int, Sequence[int], np.ndarray, DifferentiableArray]


class Elementwise(str, ListEnum):
    """Elementwise operations reachable through elementwise()."""

    ADD = "add"
    MUL = "mul"
    SUB = "sub"
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SCALE = "scale"


def _emit(
    op: str,
    values: np.ndarray,
    inputs: Sequence[DifferentiableArray],
    backward_rule: BackwardRule,
) -> DifferentiableArray:
    tape = current_tape()
    tracked = tape is not None and any(a.requires_grad for a in inputs)
    out = DifferentiableArray(values, requires_grad=tracked)
    if tracked:
        tape.record(op, inputs, out, backward_rule)  # type: ignore[union-attr]
    return out


def _same_shape(op: str, a: DifferentiableArray, b: DifferentiableArray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ.")


def _require_finite(op: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{op}: input contains NaN or Inf.")


# linear algebra


def matmul(a: DifferentiableArray, b: DifferentiableArray) -> DifferentiableArray:
    """Matrix product of two 2-d arrays, or a batched product of two 3-d arrays."""
    if a.ndim != b.ndim or a.ndim not in (2, 3):
        raise ShapeError(f"matmul: needs two 2-d or two 3-d arrays, got {a.shape} and {b.shape}.")
    if a.shape[-1] != b.shape[-2] or (a.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError(f"matmul: shapes {list(a.shape)} and {list(b.shape)} do not align.")

    def rule(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad @ np.swapaxes(b.values, -1, -2), np.swapaxes(a.values, -1, -2) @ grad

    return _emit("matmul", a.values @ b.values, (a, b), rule)


def add_bias(x: DifferentiableArray, bias: DifferentiableArray) -> DifferentiableArray:
    """Add a vector to every row (the last axis) of x."""
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"add_bias: bias {list(bias.shape)} does not fit {list(x.shape)}.")
    reduce_axes = tuple(range(x.ndim - 1))

    def rule(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return grad, grad.sum(axis=reduce_axes)

    return _emit("add_bias", x.values + bias.values, (x, bias), rule)


def linear(
    x: DifferentiableArray, weight: DifferentiableArray, bias: DifferentiableArray
) -> DifferentiableArray:
    """x @ weight + bias for a 2-d x."""
    return add_bias(matmul(x, weight), bias)


# elementwise


def add(a: DifferentiableArray, b: DifferentiableArray) -> DifferentiableArray:
    _same_shape("add", a, b)
    return _emit("add", a.values + b.values, (a, b), lambda g: (g, g))


def sub(a: DifferentiableArray, b: DifferentiableArray) -> DifferentiableArray:
    _same_shape("sub", a, b)
    return _emit("sub", a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a: DifferentiableArray, b: DifferentiableArray) -> DifferentiableArray:
    _same_shape("mul", a, b)
    return _emit("mul", a.values * b.values, (a, b), lambda g: (g * b.values, g * a.values))


def scale(x: DifferentiableArray, factor: float) -> DifferentiableArray:
    factor = float(factor)
    return _emit("scale", x.values * factor, (x,), lambda g: (g * factor,))


def relu(x: DifferentiableArray) -> DifferentiableArray:
    active = x.values > 0.0
    return _emit("relu", np.where(active, x.values, 0.0), (x,), lambda g: (g * active,))


def sigmoid(x: DifferentiableArray) -> DifferentiableArray:
    out = special.expit(x.values)
    return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: DifferentiableArray) -> DifferentiableArray:
    out = np.tanh(x.values)
    return _emit("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


_UNARY: Dict[str, Callable[[DifferentiableArray], DifferentiableArray]] = {
    Elementwise.RELU.value: relu,
    Elementwise.SIGMOID.value: sigmoid,
    Elementwise.TANH.value: tanh,
}
_BINARY: Dict[
    str, Callable[[DifferentiableArray, DifferentiableArray], DifferentiableArray]
] = {
    Elementwise.ADD.value: add,
    Elementwise.SUB.value: sub,
    Elementwise.MUL.value: mul,
}


def elementwise(
    op: Union[str, Elementwise],
    *inputs: DifferentiableArray,
    factor: Optional[float] = None,
) -> DifferentiableArray:
    """Dispatch one of the Elementwise operations by name.

    Parameters
    ----------
    op: str or Elementwise
    inputs: DifferentiableArray
        One input for unary operations and scale, two for add/sub/mul.
    factor: float, optional
        The scalar of "scale".
    """
    name = Elementwise(op).value
    if name == Elementwise.SCALE.value:
        if len(inputs) != 1 or factor is None:
            raise ValueError("scale needs one input and a factor.")
        return scale(inputs[0], factor)
    if name in _UNARY:
        if len(inputs) != 1:
            raise ValueError(f"{name} takes one input, got {len(inputs)}.")
        return _UNARY[name](inputs[0])
    if len(inputs) != 2:
        raise ValueError(f"{name} takes two inputs, got {len(inputs)}.")
    return _BINARY[name](inputs[0], inputs[1])


# shape and gather


def reshape(x: DifferentiableArray, shape: Sequence[int]) -> DifferentiableArray:
    try:
        out = x.values.reshape(tuple(shape))
    except ValueError as err:
        raise ShapeError(f"reshape: cannot view {list(x.shape)} as {list(shape)}.") from err
    return _emit("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: DifferentiableArray) -> DifferentiableArray:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise ShapeError("transpose needs at least two axes.")
    return _emit(
        "transpose", np.swapaxes(x.values, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),)
    )


def concat(arrays: Sequence[DifferentiableArray], axis: int = -1) -> DifferentiableArray:
    if not arrays:
        raise ShapeError("concat needs at least one array.")
    try:
        out = np.concatenate([a.values for a in arrays], axis=axis)
    except ValueError as err:
        raise ShapeError(f"concat: {[list(a.shape) for a in arrays]} along {axis}.") from err
    splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def rule(grad: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(grad, splits, axis=axis)

    return _emit("concat", out, tuple(arrays), rule)


def take_rows(x: DifferentiableArray, indices: Union[Sequence[int], np.ndarray]) -> DifferentiableArray:
    """Gather rows of x; the output has shape indices.shape + x.shape[1:].

    The backward pass scatter-adds into the gathered rows only, so a repeated index receives
    the sum of the gradients of its copies.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexLookupError(f"take_rows: index out of range [0, {x.shape[0] - 1}].")

    def rule(grad: np.ndarray) -> Tuple[np.ndarray]:
        out = np.zeros_like(x.values)
        np.add.at(out, idx, grad)
        return (out,)

    return _emit("take_rows", x.values[idx], (x,), rule)


def embedding_lookup(
    table: DifferentiableArray, indices: Union[Sequence[int], np.ndarray]
) -> DifferentiableArray:
    """Look up item embeddings; row 0 is the padding item."""
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {list(table.shape)}.")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexLookupError(
            f"Item id out of range [0, {table.shape[0] - 1}]: "
            f"min {int(idx.min())}, max {int(idx.max())}."
        )
    return take_rows(table, idx)


def select(x: DifferentiableArray, index: int, axis: int) -> DifferentiableArray:
    """Take one position along an axis, dropping that axis."""
    axis = axis % x.ndim
    if not -x.shape[axis] <= index < x.shape[axis]:
        raise IndexLookupError(f"select: index {index} out of range for axis {axis}.")

    def rule(grad: np.ndarray) -> Tuple[np.ndarray]:
        out = np.zeros_like(x.values)
        slicer = [slice(None)] * x.ndim
        slicer[axis] = index
        out[tuple(slicer)] = grad
        return (out,)

    return _emit("select", np.take(x.values, index, axis=axis), (x,), rule)


# reductions


def sum(x: DifferentiableArray, axis: Optional[int] = None) -> DifferentiableArray:  # pylint: disable=redefined-builtin
    out = x.values.sum(axis=axis)

    def rule(grad: np.ndarray) -> Tuple[np.ndarray]:
        g = grad if axis is None else np.expand_dims(grad, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", np.asarray(out), (x,), rule)


def mean(x: DifferentiableArray, axis: Optional[int] = None) -> DifferentiableArray:
    count = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis), 1.0 / max(count, 1))


# probability


def softmax(logits: DifferentiableArray, axis: int = -1) -> DifferentiableArray:
    """Softmax along an axis, computed after subtracting the maximum."""
    if logits.size == 0:
        raise ShapeError("softmax of an empty array.")
    _require_finite("softmax", logits.values)
    shifted = logits.values - logits.values.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=axis, keepdims=True)

    def rule(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (logits,), rule)


def log_softmax(logits: DifferentiableArray, axis: int = -1) -> DifferentiableArray:
    _require_finite("log_softmax", logits.values)
    out = logits.values - special.logsumexp(logits.values, axis=axis, keepdims=True)
    probs = np.exp(out)

    def rule(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad - probs * grad.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", out, (logits,), rule)


def masked_softmax(
    scores: DifferentiableArray, mask: np.ndarray, axis: int = -1
) -> DifferentiableArray:
    """Softmax over the entries where mask is True; masked entries get exactly zero weight.

    Rows without any unmasked entry produce all zeros.
    """
    keep = np.asarray(mask, dtype=bool)
    if keep.shape != scores.shape:
        raise ShapeError(f"mask {keep.shape} does not match scores {scores.shape}.")
    _require_finite("masked_softmax", scores.values[keep])
    guarded = np.where(keep, scores.values, -np.inf)
    row_max = guarded.max(axis=axis, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    exps = np.where(keep, np.exp(np.where(keep, scores.values, 0.0) - row_max), 0.0)
    totals = exps.sum(axis=axis, keepdims=True)
    out = exps / np.where(totals > 0.0, totals, 1.0)

    def rule(grad: np.ndarray) -> Tuple[np.ndarray]:
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)

    return _emit("masked_softmax", out, (scores,), rule)


def _one_hot_targets(target: Target, logits_shape: Tuple[int, ...]) -> np.ndarray:
    n_classes = logits_shape[-1]
    raw = target.values if isinstance(target, DifferentiableArray) else np.asarray(target)
    if raw.shape == logits_shape:
        one_hot = raw.astype(np.float64)
        if not (
            np.all((one_hot == 0.0) | (one_hot == 1.0))
            and np.all(one_hot.sum(axis=-1) == 1.0)
        ):
            raise ValueError("cross_entropy: one-hot target must hold a single 1 per row.")
        return one_hot
    expected_shape = logits_shape[:-1]
    if raw.shape != expected_shape or not np.issubdtype(raw.dtype, np.integer):
        raise ValueError(
            f"cross_entropy: target must be class indices of shape {list(expected_shape)} "
            f"or a one-hot array of shape {list(logits_shape)}."
        )
    if raw.size and (raw.min() < 0 or raw.max() >= n_classes):
        raise ValueError(f"cross_entropy: class index outside [0, {n_classes}).")
    return np.eye(n_classes)[raw]


def cross_entropy(
    logits: DifferentiableArray, target: Target, reduction: str = "mean"
) -> DifferentiableArray:
    """-log softmax(logits)[target], per row of a 2-d array or for one 1-d logit vector.

    Parameters
    ----------
    logits: DifferentiableArray
        Shape [n] or [batch, n].
    target: int, index array or one-hot array
    reduction: str
        "mean", "sum" or "none" (per-row losses); ignored for 1-d logits.
    """
    if logits.ndim not in (1, 2) or logits.shape[-1] == 0:
        raise ShapeError(f"cross_entropy: logits must be [n] or [batch, n], got {logits.shape}.")
    if reduction not in ("mean", "sum", "none"):
        raise ValueError(f"Unknown reduction {reduction!r}.")
    _require_finite("cross_entropy", logits.values)
    one_hot = _one_hot_targets(target, logits.shape)
    log_probs = logits.values - special.logsumexp(logits.values, axis=-1, keepdims=True)
    probs = np.exp(log_probs)
    per_row = -(one_hot * log_probs).sum(axis=-1)

    def rule(grad: np.ndarray) -> Tuple[np.ndarray]:
        return ((probs - one_hot) * np.expand_dims(grad, -1),)

    losses = _emit("cross_entropy", per_row, (logits,), rule)
    if logits.ndim == 1 or reduction == "none":
        return losses
    return mean(losses) if reduction == "mean" else sum(losses)


def cosine_similarity(
    u: DifferentiableArray, v: DifferentiableArray, eps: float = COSINE_EPS
) -> DifferentiableArray:
    """Cosine similarity of two vectors, or row-wise for two [batch, d] arrays.

    The denominator ||u||·||v|| is floored at eps; floor hits are counted in the active
    tape's notes under "cosine_floor".
    """
    _same_shape("cosine_similarity", u, v)
    if u.ndim not in (1, 2):
        raise ShapeError("cosine_similarity works on vectors or on rows of 2-d arrays.")
    norm_u = np.linalg.norm(u.values, axis=-1)
    norm_v = np.linalg.norm(v.values, axis=-1)
    raw_denominator = norm_u * norm_v
    floored = raw_denominator < eps
    denominator = np.where(floored, eps, raw_denominator)
    dot = (u.values * v.values).sum(axis=-1)
    out = dot / denominator
    floor_hits = int(np.count_nonzero(floored))
    if floor_hits:
        tape = current_tape()
        if tape is not None:
            tape.notes["cosine_floor"] += floor_hits
        logger.debug("cosine_similarity: denominator floored for %d pair(s).", floor_hits)

    def rule(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g = np.expand_dims(grad, -1)
        d = np.expand_dims(denominator, -1)
        s = np.expand_dims(out, -1)
        flat = np.expand_dims(floored, -1)
        safe_u = np.expand_dims(np.where(floored, 1.0, norm_u * norm_u), -1)
        safe_v = np.expand_dims(np.where(floored, 1.0, norm_v * norm_v), -1)
        grad_u = np.where(flat, v.values / d, v.values / d - s * u.values / safe_u)
        grad_v = np.where(flat, u.values / d, u.values / d - s * v.values / safe_v)
        return g * grad_u, g * grad_v

    return _emit("cosine_similarity", out, (u, v), rule)


def layer_norm(
    x: DifferentiableArray,
    gain: DifferentiableArray,
    bias: DifferentiableArray,
    eps: float = 1e-5,
) -> DifferentiableArray:
    """Normalize every row of a 2-d array to zero mean and unit variance, then rescale."""
    if x.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(
            f"layer_norm: x {list(x.shape)}, gain {list(gain.shape)}, bias {list(bias.shape)}."
        )
    centered = x.values - x.values.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    normed = centered * inv_std

    def rule(grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_normed = grad * gain.values
        grad_x = inv_std * (
            g_normed
            - g_normed.mean(axis=1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=1, keepdims=True)
        )
        return grad_x, (grad * normed).sum(axis=0), grad.sum(axis=0)

    return _emit("layer_norm", normed * gain.values + bias.values, (x, gain, bias), rule)
