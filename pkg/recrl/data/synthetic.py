"""
Synthetic session logs with a planted next-item structure.

Every item has two planted successors: a regular one and a "premium" one drawn from a small
subset of items that are bought more often. With probability ``follow_prob`` a session moves to
one of the two successors (each half of the time), otherwise to a uniformly random item. Premium
items are purchased ``premium_lift`` times more often than the rest; the rates are set so the
overall purchase share equals ``purchase_rate``.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from recrl.data.events import EVENT_COLUMNS, Behavior
from recrl.utils import make_rng

logger = logging.getLogger(__name__)


@dataclass
class SyntheticConfig:
    """Shape of the generated log; defaults give the 200-item, 5,000-session desk dataset."""

    n_items: int = 200
    n_sessions: int = 5000
    purchase_rate: float = 0.05
    follow_prob: float = 0.8
    premium_share: float = 0.2
    premium_lift: float = 4.0
    min_length: int = 3
    max_length: int = 12
    seed: int = 0

    def validate(self) -> None:
        if self.n_items < 2 or self.n_sessions < 1:
            raise ValueError("Need at least 2 items and 1 session.")
        if not 0.0 <= self.purchase_rate <= 1.0 or not 0.0 <= self.follow_prob <= 1.0:
            raise ValueError("purchase_rate and follow_prob must lie in [0, 1].")
        if not 0.0 < self.premium_share < 1.0 or self.premium_lift < 1.0:
            raise ValueError("premium_share must lie in (0, 1) and premium_lift be >= 1.")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("Need 1 <= min_length <= max_length.")


def premium_visit_share(cfg: SyntheticConfig, share: float) -> float:
    """Expected fraction of events on premium items.

    The first event of a session is uniform; later events reach a premium item through the
    premium successor, through a regular successor that happens to be premium, or at random.
    """
    following = cfg.follow_prob * (0.5 * share + 0.5) + (1.0 - cfg.follow_prob) * share
    mean_length = 0.5 * (cfg.min_length + cfg.max_length)
    return (share + (mean_length - 1.0) * following) / mean_length


def generate_sessions(cfg: SyntheticConfig) -> pd.DataFrame:
    """Frame with EVENT_COLUMNS; item ids are 1..n_items."""
    cfg.validate()
    rng = make_rng(cfg.seed)
    items = np.arange(1, cfg.n_items + 1)
    n_premium = max(1, int(round(cfg.n_items * cfg.premium_share)))
    premium = rng.choice(items, size=n_premium, replace=False)
    is_premium = np.zeros(cfg.n_items + 1, dtype=bool)
    is_premium[premium] = True
    successor = rng.permutation(items)
    premium_successor = rng.choice(premium, size=cfg.n_items)
    visits = premium_visit_share(cfg, n_premium / cfg.n_items)
    base_rate = cfg.purchase_rate / (visits * cfg.premium_lift + (1.0 - visits))
    purchase_prob = np.where(is_premium, min(1.0, base_rate * cfg.premium_lift), base_rate)

    session_ids, timestamps, item_ids, behaviors = [], [], [], []
    width = len(str(cfg.n_sessions))
    for session in range(cfg.n_sessions):
        length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        current = int(rng.integers(1, cfg.n_items + 1))
        for position in range(length):
            if position:
                if rng.random() < cfg.follow_prob:
                    table = successor if rng.random() < 0.5 else premium_successor
                    current = int(table[current - 1])
                else:
                    current = int(rng.integers(1, cfg.n_items + 1))
            bought = rng.random() < purchase_prob[current]
            session_ids.append(f"s{session:0{width}d}")
            timestamps.append(position)
            item_ids.append(current)
            behaviors.append(Behavior.PURCHASE.value if bought else Behavior.CLICK.value)
    frame = pd.DataFrame(
        {
            "session_id": session_ids,
            "timestamp": np.array(timestamps, dtype=np.int64),
            "item_id": np.array(item_ids, dtype=np.int64),
            "behavior": behaviors,
        }
    )
    logger.info(
        "Generated %d sessions, %d events, %.3f purchase share.",
        cfg.n_sessions,
        len(frame),
        float((frame["behavior"] == Behavior.PURCHASE.value).mean()),
    )
    return frame[list(EVENT_COLUMNS)]


def write_synthetic(path: Union[str, Path], cfg: SyntheticConfig) -> pd.DataFrame:
    """Write the generated log in the generic layout (no header, comma separated)."""
    frame = generate_sessions(cfg)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, header=False, index=False)
    return frame
