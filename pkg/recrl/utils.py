"""This module provides utilities."""
import hashlib
import json
import logging
from enum import Enum
from typing import Any, List, Mapping, Optional

import numpy as np

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


class ListEnum(Enum):
    """This class provides a method to list enums values."""

    @classmethod
    def list(cls) -> List[Any]:
        """Returns a list of Enum's values."""
        return list(map(lambda c: c.value, cls))  # type: ignore


def setup_logging(level: str = "INFO") -> None:
    """Install a single stream handler on the root logger.

    Parameters
    ----------
    level: str
        Any name accepted by the logging module, e.g. "DEBUG" or "WARNING".
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())


def canonical_json(payload: Mapping[str, Any]) -> str:
    """Serialize a mapping with sorted keys and no insignificant whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)


def config_digest(payload: Mapping[str, Any]) -> str:
    """SHA-256 hex digest of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Returns the numpy Generator used everywhere a seeded stream is needed."""
    return np.random.default_rng(seed)


def _json_default(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (set, frozenset, tuple)):
        return sorted(value) if isinstance(value, (set, frozenset)) else list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def spawn_rngs(seed: Optional[int], count: int) -> List[np.random.Generator]:
    """Independent generators derived from one seed, one per random stream."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]
