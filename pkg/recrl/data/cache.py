"""
Preprocessed dataset cache ("SRLF1").

The cache holds the item remapping table, the Table-1 style statistics and, for every split, the
transition columns plus the flattened session item lists used to exclude negatives.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from recrl.data.dataset import (
    CLICK_REWARD,
    PURCHASE_REWARD,
    SPLIT_NAMES,
    WINDOW,
    DatasetSplit,
    TransitionTable,
)
from recrl.exceptions import DataFormatError
from recrl.serialization import read_container, write_container

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"SRLF1"
CACHE_VERSION = 1


@dataclass
class PreprocessedDataset:
    """Everything training and evaluation read from the cache.

    Attributes
    ----------
    item_count: int
    item_ids: np.ndarray
        Raw id of dense item i at position i - 1.
    tables: Dict[str, TransitionTable]
        One table per split name.
    statistics: Dict[str, int]
        sessions, items, clicks and purchases after filtering.
    config_digest: str
        Digest of the preprocessing settings.
    """

    item_count: int
    item_ids: np.ndarray
    tables: Dict[str, TransitionTable]
    statistics: Dict[str, int]
    config_digest: str = ""

    @classmethod
    def from_split(
        cls,
        split: DatasetSplit,
        window: int = WINDOW,
        click_reward: float = CLICK_REWARD,
        purchase_reward: float = PURCHASE_REWARD,
        config_digest: str = "",
    ) -> PreprocessedDataset:
        tables = {
            name: TransitionTable.from_sessions(
                split.sessions(name),
                window=window,
                click_reward=click_reward,
                purchase_reward=purchase_reward,
            )
            for name in SPLIT_NAMES
        }
        return cls(
            item_count=split.item_count,
            item_ids=split.item_ids,
            tables=tables,
            statistics=split.statistics(),
            config_digest=config_digest,
        )

    def table(self, name: str) -> TransitionTable:
        if name not in self.tables:
            raise ValueError(f"Unknown split {name!r}, expected one of {SPLIT_NAMES}.")
        return self.tables[name]


def write_cache(
    path: Union[str, Path],
    dataset: PreprocessedDataset,
    extra_meta: Optional[Mapping[str, Any]] = None,
) -> None:
    arrays: Dict[str, np.ndarray] = {"item_ids": dataset.item_ids}
    for name in SPLIT_NAMES:
        for column, values in dataset.tables[name].arrays().items():
            arrays[f"{name}.{column}"] = values
    meta = {
        "version": CACHE_VERSION,
        "item_count": dataset.item_count,
        "statistics": dataset.statistics,
        "config_digest": dataset.config_digest,
        **dict(extra_meta or {}),
    }
    write_container(path, CACHE_MAGIC, meta, arrays)
    logger.info("Wrote dataset cache %s (%d items).", path, dataset.item_count)


def read_cache(path: Union[str, Path]) -> PreprocessedDataset:
    """Load a cache written by write_cache.

    Raises
    ------
    DataFormatError
        On a foreign file or an unsupported version.
    """
    meta, arrays = read_container(path, CACHE_MAGIC)
    if meta.get("version") != CACHE_VERSION:
        raise DataFormatError(f"{path}: unsupported cache version {meta.get('version')!r}.")
    tables = {}
    for name in SPLIT_NAMES:
        prefix = f"{name}."
        tables[name] = TransitionTable.from_arrays(
            {key[len(prefix) :]: value for key, value in arrays.items() if key.startswith(prefix)}
        )
    return PreprocessedDataset(
        item_count=int(meta["item_count"]),
        item_ids=arrays["item_ids"],
        tables=tables,
        statistics={key: int(value) for key, value in meta["statistics"].items()},
        config_digest=str(meta.get("config_digest", "")),
    )
