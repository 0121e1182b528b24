"""
Small builders shared by the tests.
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from recrl.data.dataset import Session


def make_session(
    session_id: str, items: Sequence[int], purchases: Optional[Sequence[bool]] = None
) -> Session:
    values = np.asarray(items, dtype=np.int64)
    bought = (
        np.zeros(values.size, dtype=bool)
        if purchases is None
        else np.asarray(purchases, dtype=bool)
    )
    return Session(session_id=session_id, items=values, purchases=bought)


def events_frame(sessions: Dict[str, List[Tuple[int, str]]]) -> pd.DataFrame:
    """Generic-layout frame from {session_id: [(item, behavior), ...]}."""
    rows = [
        (session_id, position, item, behavior)
        for session_id, events in sessions.items()
        for position, (item, behavior) in enumerate(events)
    ]
    frame = pd.DataFrame(rows, columns=["session_id", "timestamp", "item_id", "behavior"])
    return frame.astype({"timestamp": np.int64, "item_id": np.int64})
