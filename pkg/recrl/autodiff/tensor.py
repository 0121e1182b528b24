"""
Arrays that remember how they were computed.

The engine is define-by-run: every differentiable operation executed while a Tape is active is
appended to that tape, and Tape.backward walks the records in reverse order. A new tape is opened
for every training step, so the graph of one step never outlives it.
"""
from __future__ import annotations

import itertools
import logging
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from recrl.exceptions import GradientError, ShapeError

logger = logging.getLogger(__name__)

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Shape = Tuple[int, ...]

_NODE_IDS = itertools.count()
_ACTIVE_TAPES: List[Optional["Tape"]] = []


class DifferentiableArray:
    """Dense float64 array with a gradient buffer of the same shape.

    Attributes
    ----------
    values: np.ndarray
        The forward values.
    grad: np.ndarray
        Accumulated gradient of the last backward pass, zero after zero_grad().
    requires_grad: bool
        Leaves with requires_grad receive gradients; constants do not.
    node_id: int
        Identifier of the node on the tape that produced (or registered) the array.
    """

    def __init__(self, values: Union[np.ndarray, float], requires_grad: bool = False) -> None:
        self.values = np.array(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.requires_grad = requires_grad
        self.node_id = next(_NODE_IDS)
        self.tape: Optional[Tape] = None

    @classmethod
    def create(
        cls,
        shape: Sequence[int],
        values: Union[Sequence[float], np.ndarray],
        requires_grad: bool = False,
    ) -> DifferentiableArray:
        """Build an array from a shape and a flat sequence of values.

        Raises
        ------
        ShapeError
            If the number of values differs from the product of the shape.
        """
        dims = tuple(int(d) for d in shape)
        if any(d < 0 for d in dims):
            raise ShapeError(f"Negative dimension in shape {dims}.")
        flat = np.asarray(values, dtype=np.float64).ravel()
        expected = int(np.prod(dims, dtype=np.int64))
        if flat.size != expected:
            raise ShapeError(
                f"Shape {list(dims)} needs {expected} values, got {flat.size}."
            )
        array = cls(flat.reshape(dims), requires_grad=requires_grad)
        tape = current_tape()
        if requires_grad and tape is not None:
            tape.register_leaf(array)
        return array

    @property
    def shape(self) -> Shape:
        return tuple(self.values.shape)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        """The single value of a scalar array."""
        if self.size != 1:
            raise ShapeError(f"item() needs a single value, array has shape {self.shape}.")
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return (
            f"DifferentiableArray(shape={list(self.shape)}, "
            f"requires_grad={self.requires_grad}, node_id={self.node_id})"
        )

    # operator sugar, the rules live in functional
    def __add__(self, other: DifferentiableArray) -> DifferentiableArray:
        from recrl.autodiff import functional

        return functional.add(self, other)

    def __sub__(self, other: DifferentiableArray) -> DifferentiableArray:
        from recrl.autodiff import functional

        return functional.sub(self, other)

    def __mul__(self, other: DifferentiableArray) -> DifferentiableArray:
        from recrl.autodiff import functional

        return functional.mul(self, other)

    def __matmul__(self, other: DifferentiableArray) -> DifferentiableArray:
        from recrl.autodiff import functional

        return functional.matmul(self, other)

    def __neg__(self) -> DifferentiableArray:
        from recrl.autodiff import functional

        return functional.scale(self, -1.0)


@dataclass
class TapeRecord:
    """One recorded operation."""

    op: str
    input_ids: Tuple[int, ...]
    output_id: int
    inputs: Tuple[DifferentiableArray, ...]
    output: DifferentiableArray
    backward_rule: BackwardRule


class Tape:
    """Ordered record of the differentiable operations of one forward pass.

    Use it as a context manager; operations executed inside the ``with`` block are recorded.

    Attributes
    ----------
    records: List[TapeRecord]
    notes: Counter
        Free-form counters written by operations, e.g. "cosine_floor" for epsilon-floor hits.
    """

    def __init__(self) -> None:
        self.records: List[TapeRecord] = []
        self.notes: Counter = Counter()
        self._known: Set[int] = set()

    def __enter__(self) -> Tape:
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        _ACTIVE_TAPES.pop()

    def __len__(self) -> int:
        return len(self.records)

    def register_leaf(self, array: DifferentiableArray) -> None:
        self._known.add(array.node_id)

    def record(
        self,
        op: str,
        inputs: Sequence[DifferentiableArray],
        output: DifferentiableArray,
        backward_rule: BackwardRule,
    ) -> None:
        """Append an operation; inputs seen for the first time are registered as leaves."""
        for array in inputs:
            if array.node_id not in self._known:
                self.register_leaf(array)
        if output.node_id in self._known:
            raise GradientError(f"Node {output.node_id} was already recorded.")
        self._known.add(output.node_id)
        output.tape = self
        self.records.append(
            TapeRecord(
                op=op,
                input_ids=tuple(a.node_id for a in inputs),
                output_id=output.node_id,
                inputs=tuple(inputs),
                output=output,
                backward_rule=backward_rule,
            )
        )

    def backward(self, loss: DifferentiableArray) -> None:
        """Accumulate dLoss/dNode into the grad buffer of every node that requires it.

        Raises
        ------
        GradientError
            If the loss is not a scalar or the tape has no records.
        """
        if loss.size != 1:
            raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}.")
        if not self.records:
            raise GradientError("backward called on an empty tape.")
        loss.grad += 1.0
        for record in reversed(self.records):
            output = record.output
            if not output.requires_grad:
                continue
            input_grads = record.backward_rule(output.grad)
            for array, grad in zip(record.inputs, input_grads):
                if grad is None or not array.requires_grad:
                    continue
                if grad.shape != array.grad.shape:
                    raise ShapeError(
                        f"{record.op}: gradient shape {grad.shape} "
                        f"does not match input shape {array.grad.shape}."
                    )
                array.grad += grad
        if self.notes:
            logger.debug("Tape notes after backward: %s", dict(self.notes))


def current_tape() -> Optional[Tape]:
    """The innermost active tape, or None inside no_grad() or outside any tape."""
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording; operations inside return constants."""
    _ACTIVE_TAPES.append(None)
    try:
        yield
    finally:
        _ACTIVE_TAPES.pop()


def backward(loss: DifferentiableArray) -> None:
    """Run the backward pass of the tape that produced ``loss``."""
    if loss.tape is None:
        raise GradientError("The loss was not produced on a tape; nothing to differentiate.")
    loss.tape.backward(loss)


def array_create(
    shape: Sequence[int],
    values: Union[Sequence[float], np.ndarray],
    requires_grad: bool = False,
) -> DifferentiableArray:
    """Functional alias of DifferentiableArray.create."""
    return DifferentiableArray.create(shape, values, requires_grad=requires_grad)


def constant(values: Union[np.ndarray, float]) -> DifferentiableArray:
    """Wrap values that never need a gradient."""
    return DifferentiableArray(values, requires_grad=False)


def parameter(values: Union[np.ndarray, float]) -> DifferentiableArray:
    """Wrap trainable values."""
    return DifferentiableArray(values, requires_grad=True)
