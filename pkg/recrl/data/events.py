"""
The events module reads logged interactions into InteractionEvent records.

Input files are delimiter-separated rows holding a session id, an integer timestamp, an integer
item id and a behavior token. A FormatSpec says where those columns are and how the dataset's
behavior tokens map onto click and purchase.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, TextIO, Union

import numpy as np
import pandas as pd

from recrl.exceptions import DataFormatError
from recrl.utils import ListEnum

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ("session_id", "timestamp", "item_id", "behavior")


class Behavior(str, ListEnum):
    """The two kinds of positive feedback."""

    CLICK = "click"
    PURCHASE = "purchase"


class DatasetPreset(str, ListEnum):
    """Known input layouts."""

    GENERIC = "generic"
    RETAILROCKET = "retailrocket"
    YOOCHOOSE = "yoochoose"


@dataclass(frozen=True)
class InteractionEvent:
    """One logged interaction.

    Attributes
    ----------
    session_id: str
    timestamp: int
        Ordering key inside the session.
    item_id: int
        Raw item id while parsing, dense id in [1, |I|] once a DatasetSplit has remapped it.
    behavior: Behavior
    """

    session_id: str
    timestamp: int
    item_id: int
    behavior: Behavior


@dataclass(frozen=True)
class FormatSpec:
    """Layout of an event file.

    Attributes
    ----------
    delimiter: str
    has_header: bool
        Skip the first line.
    columns: Mapping[str, int]
        Position of session_id, timestamp, item_id and behavior in a row.
    behavior_tokens: Mapping[str, Behavior]
        Dataset token -> behavior, e.g. "view" -> click.
    ignored_tokens: FrozenSet[str]
        Tokens whose rows are dropped silently (e.g. RetailRocket "transaction").
    """

    delimiter: str = ","
    has_header: bool = False
    columns: Mapping[str, int] = field(
        default_factory=lambda: {name: i for i, name in enumerate(EVENT_COLUMNS)}
    )
    behavior_tokens: Mapping[str, Behavior] = field(
        default_factory=lambda: {"click": Behavior.CLICK, "purchase": Behavior.PURCHASE}
    )
    ignored_tokens: FrozenSet[str] = frozenset()

    def __post_init__(self) -> None:
        missing = set(EVENT_COLUMNS) - set(self.columns)
        if missing:
            raise ValueError(f"FormatSpec.columns lacks {sorted(missing)}.")
        if len(set(self.columns.values())) != len(self.columns):
            raise ValueError("FormatSpec.columns maps two fields onto the same position.")

    @property
    def n_columns(self) -> int:
        return max(self.columns.values()) + 1

    def to_dict(self) -> Dict[str, object]:
        return {
            "delimiter": self.delimiter,
            "has_header": self.has_header,
            "columns": dict(sorted(self.columns.items())),
            "behavior_tokens": {k: Behavior(v).value for k, v in sorted(self.behavior_tokens.items())},
            "ignored_tokens": sorted(self.ignored_tokens),
        }

    @classmethod
    def preset(cls, name: Union[str, DatasetPreset]) -> FormatSpec:
        """FormatSpec of a known dataset layout."""
        preset = DatasetPreset(name)
        if preset is DatasetPreset.RETAILROCKET:
            # events.csv: timestamp,visitorid,event,itemid,transactionid
            return cls(
                delimiter=",",
                has_header=True,
                columns={"timestamp": 0, "session_id": 1, "behavior": 2, "item_id": 3},
                behavior_tokens={"view": Behavior.CLICK, "addtocart": Behavior.PURCHASE},
                ignored_tokens=frozenset({"transaction"}),
            )
        if preset is DatasetPreset.YOOCHOOSE:
            return cls(
                behavior_tokens={"click": Behavior.CLICK, "buy": Behavior.PURCHASE},
            )
        return cls()


def read_events_frame(source: Union[str, Path, TextIO], fmt: FormatSpec) -> pd.DataFrame:
    """Parse an event file into a frame with EVENT_COLUMNS, sorted by (session_id, timestamp).

    Rows with equal timestamps keep their input order. The behavior column holds
    Behavior values.

    Raises
    ------
    DataFormatError
        On a row with a wrong number of fields, a non-integer timestamp or item id, or an
        unknown behavior token. The message carries the 1-based line number.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            text = handle.read()
    else:
        text = source.read()
    first_line = 2 if fmt.has_header else 1
    if not text.strip():
        return _empty_frame()
    try:
        raw = pd.read_csv(
            io.StringIO(text),
            sep=fmt.delimiter,
            header=None,
            skiprows=1 if fmt.has_header else 0,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            engine="python",
        )
    except pd.errors.ParserError as err:
        raise DataFormatError(f"Malformed event file: {err}") from err
    except pd.errors.EmptyDataError:
        return _empty_frame()
    raw = raw.fillna("")
    line_numbers = _line_numbers(text, fmt.has_header)
    if raw.shape[1] < fmt.n_columns:
        raise DataFormatError(
            f"line {first_line}: expected at least {fmt.n_columns} fields, got {raw.shape[1]}."
        )
    short_rows = np.flatnonzero(
        (raw.iloc[:, : fmt.n_columns] == "").to_numpy().any(axis=1)
    )
    if short_rows.size:
        raise DataFormatError(f"line {line_numbers[short_rows[0]]}: missing field(s).")

    frame = pd.DataFrame(
        {name: raw.iloc[:, position].str.strip() for name, position in fmt.columns.items()}
    )
    frame = frame.assign(_line=line_numbers[: len(frame)])
    frame = frame[~frame["behavior"].isin(fmt.ignored_tokens)]
    for column in ("timestamp", "item_id"):
        parsed = pd.to_numeric(frame[column], errors="coerce")
        bad = parsed.isna() | (parsed != parsed.round())
        if bad.any():
            line = int(frame.loc[bad, "_line"].iloc[0])
            raise DataFormatError(
                f"line {line}: {column} {frame.loc[bad, column].iloc[0]!r} is not an integer."
            )
        frame[column] = parsed.astype(np.int64)
    unknown = ~frame["behavior"].isin(list(fmt.behavior_tokens))
    if unknown.any():
        line = int(frame.loc[unknown, "_line"].iloc[0])
        raise DataFormatError(
            f"line {line}: unknown behavior token {frame.loc[unknown, 'behavior'].iloc[0]!r}."
        )
    frame["behavior"] = frame["behavior"].map(
        {token: Behavior(b).value for token, b in fmt.behavior_tokens.items()}
    )
    frame = frame.sort_values(["session_id", "timestamp", "_line"], kind="mergesort")
    logger.info("Parsed %d events in %d sessions.", len(frame), frame["session_id"].nunique())
    return frame.drop(columns="_line").reset_index(drop=True)[list(EVENT_COLUMNS)]


def parse_events(source: Union[str, Path, TextIO], fmt: FormatSpec) -> List[InteractionEvent]:
    """Parse an event file into InteractionEvent records grouped by session, in time order."""
    return frame_to_events(read_events_frame(source, fmt))


def frame_to_events(frame: pd.DataFrame) -> List[InteractionEvent]:
    return [
        InteractionEvent(
            session_id=str(row.session_id),
            timestamp=int(row.timestamp),
            item_id=int(row.item_id),
            behavior=Behavior(row.behavior),
        )
        for row in frame.itertuples(index=False)
    ]


def events_to_frame(events: List[InteractionEvent]) -> pd.DataFrame:
    if not events:
        return _empty_frame()
    return pd.DataFrame(
        {
            "session_id": [e.session_id for e in events],
            "timestamp": np.array([e.timestamp for e in events], dtype=np.int64),
            "item_id": np.array([e.item_id for e in events], dtype=np.int64),
            "behavior": [Behavior(e.behavior).value for e in events],
        }
    )


def _line_numbers(text: str, has_header: bool) -> np.ndarray:
    """1-based file line number of every non-blank data row."""
    lines = text.splitlines()
    start = 1 if has_header else 0
    return np.array(
        [i + 1 for i in range(start, len(lines)) if lines[i].strip()], dtype=np.int64
    )


def _empty_frame() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "session_id": pd.Series([], dtype=str),
            "timestamp": pd.Series([], dtype=np.int64),
            "item_id": pd.Series([], dtype=np.int64),
            "behavior": pd.Series([], dtype=str),
        }
    )
