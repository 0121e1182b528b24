"""
Sessions, dataset splits and MDP transitions.

A session x_1..x_n becomes n-1 transitions: the state at step t is the window of the last
WINDOW items of x_1..x_t (left-padded with the padding item 0), the action is x_{t+1}, the reward
is the click or purchase reward of x_{t+1}, and the next state is the window of x_1..x_{t+1}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from recrl.data.events import Behavior, InteractionEvent, events_to_frame
from recrl.exceptions import EmptyDatasetError
from recrl.utils import make_rng

logger = logging.getLogger(__name__)

PADDING_ITEM = 0
WINDOW = 10
CLICK_REWARD = 0.2
PURCHASE_REWARD = 1.0
SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class Session:
    """One session with dense item ids.

    Attributes
    ----------
    session_id: str
    items: np.ndarray
        Item ids in [1, |I|], in time order.
    purchases: np.ndarray
        True where the event was a purchase.
    """

    session_id: str
    items: np.ndarray
    purchases: np.ndarray

    def __len__(self) -> int:
        return int(self.items.size)


@dataclass
class DatasetSplit:
    """Train / validation / test sessions over a dense item catalog.

    Attributes
    ----------
    train, validation, test: List[Session]
    item_count: int
        |I|; dense ids are 1..item_count, 0 is the padding item.
    item_ids: np.ndarray
        Raw id of dense item i at position i - 1.
    """

    train: List[Session]
    validation: List[Session]
    test: List[Session]
    item_count: int
    item_ids: np.ndarray = field(repr=False)

    @property
    def item_map(self) -> Dict[int, int]:
        """Raw item id -> dense item id."""
        return {int(raw): dense for dense, raw in enumerate(self.item_ids, start=1)}

    def sessions(self, name: str) -> List[Session]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"Unknown split {name!r}, expected one of {SPLIT_NAMES}.")
        return getattr(self, name)

    def statistics(self) -> Dict[str, int]:
        """Session, item, click and purchase counts over all splits."""
        sessions = self.train + self.validation + self.test
        purchases = int(sum(int(s.purchases.sum()) for s in sessions))
        events = int(sum(len(s) for s in sessions))
        return {
            "sessions": len(sessions),
            "items": self.item_count,
            "clicks": events - purchases,
            "purchases": purchases,
        }


def filter_and_split(
    events: Union[Sequence[InteractionEvent], pd.DataFrame],
    min_item_freq: int = 3,
    min_session_len: int = 3,
    ratios: Tuple[int, int, int] = (8, 1, 1),
    seed: int = 0,
    sample_sessions: Optional[int] = None,
) -> DatasetSplit:
    """Filter rare items and short sessions to a fixed point, remap items and split by session.

    Parameters
    ----------
    events: list of InteractionEvent or a frame from read_events_frame
    min_item_freq: int
        Items seen fewer times are removed.
    min_session_len: int
        Sessions with fewer events are removed.
    ratios: tuple of three ints summing to 10
        Train / validation / test proportions of sessions.
    seed: int
        Drives session sampling and the session shuffle.
    sample_sessions: int, optional
        Keep this many randomly chosen sessions before filtering.

    Raises
    ------
    EmptyDatasetError
        If nothing survives the filtering.
    """
    if len(ratios) != 3 or sum(ratios) != 10 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative ints summing to 10, got {ratios}.")
    frame = events.copy() if isinstance(events, pd.DataFrame) else events_to_frame(list(events))
    frame = frame.sort_values(["session_id", "timestamp"], kind="mergesort")
    rng = make_rng(seed)

    if sample_sessions is not None:
        all_ids = np.sort(frame["session_id"].unique())
        if sample_sessions < all_ids.size:
            chosen = rng.choice(all_ids, size=sample_sessions, replace=False)
            frame = frame[frame["session_id"].isin(chosen)]

    rounds = 0
    while True:
        rounds += 1
        size_before = len(frame)
        item_counts = frame["item_id"].map(frame["item_id"].value_counts())
        frame = frame[item_counts >= min_item_freq]
        session_lengths = frame.groupby("session_id")["item_id"].transform("size")
        frame = frame[session_lengths >= min_session_len]
        if len(frame) == size_before:
            break
    logger.info("Filtering reached a fixed point after %d round(s): %d events.", rounds, len(frame))
    if frame.empty:
        raise EmptyDatasetError("No events left after filtering rare items and short sessions.")

    item_ids = np.sort(frame["item_id"].unique())
    dense_items = np.searchsorted(item_ids, frame["item_id"].to_numpy()) + 1
    purchases = (frame["behavior"] == Behavior.PURCHASE.value).to_numpy()
    session_column = frame["session_id"].to_numpy()
    boundaries = np.flatnonzero(session_column[1:] != session_column[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    sessions = [
        Session(session_id=str(session_column[start]), items=items, purchases=bought)
        for start, items, bought in zip(
            starts, np.split(dense_items, boundaries), np.split(purchases, boundaries)
        )
    ]

    order = rng.permutation(len(sessions))
    n_train = len(sessions) * ratios[0] // 10
    n_validation = len(sessions) * ratios[1] // 10
    shuffled = [sessions[i] for i in order]
    split = DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_validation],
        test=shuffled[n_train + n_validation :],
        item_count=int(item_ids.size),
        item_ids=item_ids.astype(np.int64),
    )
    logger.info(
        "Split %d sessions into %d/%d/%d over %d items.",
        len(sessions),
        len(split.train),
        len(split.validation),
        len(split.test),
        split.item_count,
    )
    return split


@dataclass(frozen=True)
class Transition:
    """One MDP sample (s, a, r, s').

    Attributes
    ----------
    state: Tuple[int, ...]
        Window of the last items before the action, left-padded with 0.
    action: int
    reward: float
        The click or the purchase reward.
    next_state: Tuple[int, ...]
    terminal: bool
        True on the last transition of a session.
    behavior: Behavior
        Behavior of the action event.
    session_index: int
        Position of the session in the list the transition was built from.
    """

    state: Tuple[int, ...]
    action: int
    reward: float
    next_state: Tuple[int, ...]
    terminal: bool
    behavior: Behavior
    session_index: int


@dataclass
class TransitionTable:
    """Column store of the transitions of one split, plus the item sets of its sessions."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    purchases: np.ndarray
    session_index: np.ndarray
    session_offsets: np.ndarray
    session_items: np.ndarray

    def __len__(self) -> int:
        return int(self.actions.size)

    def __iter__(self) -> Iterator[Transition]:
        return (self.transition(i) for i in range(len(self)))

    @property
    def window(self) -> int:
        return int(self.states.shape[1])

    def items_of_session(self, index: int) -> np.ndarray:
        return self.session_items[self.session_offsets[index] : self.session_offsets[index + 1]]

    def transition(self, i: int) -> Transition:
        return Transition(
            state=tuple(int(x) for x in self.states[i]),
            action=int(self.actions[i]),
            reward=float(self.rewards[i]),
            next_state=tuple(int(x) for x in self.next_states[i]),
            terminal=bool(self.terminals[i]),
            behavior=Behavior.PURCHASE if self.purchases[i] else Behavior.CLICK,
            session_index=int(self.session_index[i]),
        )

    def arrays(self) -> Dict[str, np.ndarray]:
        return {
            "states": self.states,
            "actions": self.actions,
            "rewards": self.rewards,
            "next_states": self.next_states,
            "terminals": self.terminals,
            "purchases": self.purchases,
            "session_index": self.session_index,
            "session_offsets": self.session_offsets,
            "session_items": self.session_items,
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> TransitionTable:
        return cls(**{name: arrays[name] for name in cls.__dataclass_fields__})

    @classmethod
    def from_sessions(
        cls,
        sessions: Sequence[Session],
        window: int = WINDOW,
        click_reward: float = CLICK_REWARD,
        purchase_reward: float = PURCHASE_REWARD,
    ) -> TransitionTable:
        """Build every transition of ``sessions``; the first event of a session yields none."""
        states, next_states, actions, purchases, terminals, owners = [], [], [], [], [], []
        for index, session in enumerate(sessions):
            n = len(session)
            if n < 2:
                continue
            padded = np.concatenate((np.full(window, PADDING_ITEM, dtype=np.int64), session.items))
            windows = sliding_window_view(padded, window)
            states.append(windows[1:n])
            next_states.append(windows[2 : n + 1])
            actions.append(session.items[1:])
            purchases.append(session.purchases[1:])
            ends = np.zeros(n - 1, dtype=bool)
            ends[-1] = True
            terminals.append(ends)
            owners.append(np.full(n - 1, index, dtype=np.int64))
        lengths = np.array([len(s) for s in sessions], dtype=np.int64)
        offsets = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
        all_items = (
            np.concatenate([s.items for s in sessions]).astype(np.int64)
            if sessions
            else np.zeros(0, dtype=np.int64)
        )
        if not actions:
            empty_window = np.zeros((0, window), dtype=np.int64)
            return cls(
                states=empty_window,
                actions=np.zeros(0, dtype=np.int64),
                rewards=np.zeros(0),
                next_states=empty_window.copy(),
                terminals=np.zeros(0, dtype=bool),
                purchases=np.zeros(0, dtype=bool),
                session_index=np.zeros(0, dtype=np.int64),
                session_offsets=offsets,
                session_items=all_items,
            )
        bought = np.concatenate(purchases).astype(bool)
        return cls(
            states=np.ascontiguousarray(np.concatenate(states), dtype=np.int64),
            actions=np.concatenate(actions).astype(np.int64),
            rewards=np.where(bought, purchase_reward, click_reward).astype(np.float64),
            next_states=np.ascontiguousarray(np.concatenate(next_states), dtype=np.int64),
            terminals=np.concatenate(terminals),
            purchases=bought,
            session_index=np.concatenate(owners),
            session_offsets=offsets,
            session_items=all_items,
        )


def build_transitions(
    sessions: Sequence[Session],
    window: int = WINDOW,
    click_reward: float = CLICK_REWARD,
    purchase_reward: float = PURCHASE_REWARD,
) -> List[Transition]:
    """List form of TransitionTable.from_sessions."""
    return list(
        TransitionTable.from_sessions(
            sessions, window=window, click_reward=click_reward, purchase_reward=purchase_reward
        )
    )
