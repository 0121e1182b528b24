"""Mini-batch sampling and negative actions."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterator, Optional

import numpy as np

from recrl.data.dataset import PADDING_ITEM, TransitionTable
from recrl.exceptions import NegativeSamplingError


@dataclass
class Batch:
    """N transitions in column form, optionally with M negative actions per transition."""

    indices: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    purchases: np.ndarray
    session_index: np.ndarray
    negatives: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.actions.size)

    @classmethod
    def from_table(cls, table: TransitionTable, indices: np.ndarray) -> Batch:
        return cls(
            indices=indices,
            states=table.states[indices],
            actions=table.actions[indices],
            rewards=table.rewards[indices],
            next_states=table.next_states[indices],
            terminals=table.terminals[indices],
            purchases=table.purchases[indices],
            session_index=table.session_index[indices],
        )

    def with_negatives(self, negatives: np.ndarray) -> Batch:
        if negatives.shape[0] != len(self):
            raise ValueError(
                f"negatives has {negatives.shape[0]} rows for a batch of {len(self)}."
            )
        return dataclasses.replace(self, negatives=negatives)

    def to_dict(self) -> Dict[str, list]:
        """Plain lists, for diagnostic dumps."""
        return {
            f.name: getattr(self, f.name).tolist()
            for f in dataclasses.fields(self)
            if getattr(self, f.name) is not None
        }


class BatchSampler:
    """Uniform sampling without replacement inside an epoch.

    Every epoch draws a fresh permutation of the table rows and serves it in consecutive slices
    of ``batch_size``; the last slice of an epoch may be smaller.

    Parameters
    ----------
    table: TransitionTable
        Training transitions, must not be empty.
    batch_size: int
        Default 256.
    rng: np.random.Generator
    """

    def __init__(
        self, table: TransitionTable, batch_size: int = 256, rng: Optional[np.random.Generator] = None
    ) -> None:
        if len(table) == 0:
            raise ValueError("Cannot sample batches from an empty transition table.")
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1.")
        self.table = table
        self.batch_size = batch_size
        self.rng = rng if rng is not None else np.random.default_rng()
        self.epoch = 0
        self._order = np.zeros(0, dtype=np.int64)
        self._cursor = 0

    def sample_batch(self) -> Batch:
        """The next mini-batch of the current epoch, starting a new epoch when exhausted."""
        if self._cursor >= self._order.size:
            self._order = self.rng.permutation(len(self.table))
            self._cursor = 0
            self.epoch += 1
        indices = self._order[self._cursor : self._cursor + self.batch_size]
        self._cursor += indices.size
        return Batch.from_table(self.table, indices)

    def __iter__(self) -> Iterator[Batch]:
        while True:
            yield self.sample_batch()


def sample_negative_actions(
    session_items: np.ndarray,
    num_negatives: int,
    item_count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw item ids uniformly from [1, item_count] minus the items of the session.

    Duplicates among the negatives are allowed.

    Raises
    ------
    NegativeSamplingError
        If every item of the catalog appears in the session.
    """
    if num_negatives < 0:
        raise ValueError("num_negatives must be non-negative.")
    if num_negatives == 0:
        return np.zeros(0, dtype=np.int64)
    excluded = np.unique(np.asarray(session_items, dtype=np.int64))
    excluded = excluded[excluded != PADDING_ITEM]
    if item_count - excluded.size < 1:
        raise NegativeSamplingError(
            f"No item outside the session: catalog of {item_count}, "
            f"{excluded.size} item(s) in the session."
        )
    drawn = np.zeros(0, dtype=np.int64)
    while drawn.size < num_negatives:
        needed = num_negatives - drawn.size
        candidates = rng.integers(1, item_count + 1, size=2 * needed + 8)
        drawn = np.concatenate((drawn, candidates[~np.isin(candidates, excluded)]))
    return drawn[:num_negatives]


def draw_batch_negatives(
    batch: Batch,
    table: TransitionTable,
    num_negatives: int,
    item_count: int,
    rng: np.random.Generator,
) -> Batch:
    """Attach num_negatives negative actions to every transition of the batch."""
    negatives = np.stack(
        [
            sample_negative_actions(
                table.items_of_session(int(owner)), num_negatives, item_count, rng
            )
            for owner in batch.session_index
        ]
    ) if len(batch) else np.zeros((0, num_negatives), dtype=np.int64)
    return batch.with_negatives(negatives.reshape(len(batch), num_negatives))
