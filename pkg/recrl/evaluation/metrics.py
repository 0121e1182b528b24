"""
Ranking metrics and the MetricsReport.

Ranks are 1-based over the whole catalog. Ties are broken in favour of the smaller item id, so a
rank is fully determined by the logits.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from recrl.data.dataset import CLICK_REWARD, PADDING_ITEM, PURCHASE_REWARD
from recrl.data.events import Behavior

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_KS = (5, 10, 20)

Logits = Union[np.ndarray, Any]


def _as_values(logits: Logits) -> np.ndarray:
    return np.asarray(getattr(logits, "values", logits), dtype=np.float64)


def rank_of_target(policy_logits: Logits, target: int) -> int:
    """Rank of item ``target`` among all items; column j of the logits scores item j + 1.

    Raises
    ------
    ValueError
        If the target is the padding item or outside the catalog.
    """
    logits = _as_values(policy_logits)
    if logits.ndim != 1:
        raise ValueError(f"Expected a logit vector, got shape {logits.shape}.")
    if target == PADDING_ITEM or not 1 <= target <= logits.size:
        raise ValueError(f"Target {target} is not an item of a catalog of {logits.size}.")
    column = target - 1
    score = logits[column]
    return 1 + int(np.count_nonzero(logits > score)) + int(
        np.count_nonzero(logits[:column] == score)
    )


def ranks_of_targets(
    policy_logits: Logits,
    targets: np.ndarray,
    excluded: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Row-wise rank_of_target for a [B, |I|] logit matrix.

    Parameters
    ----------
    excluded: np.ndarray, optional
        [B, window] item ids pushed to the bottom of their row (padding ignored); a row's own
        target is never excluded.
    """
    logits = _as_values(policy_logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(f"Logits {logits.shape} and targets {targets.shape} do not align.")
    if targets.size and (targets.min() < 1 or targets.max() > logits.shape[1]):
        raise ValueError("A target is the padding item or outside the catalog.")
    rows = np.arange(targets.size)
    columns = targets - 1
    if excluded is not None:
        logits = logits.copy()
        items = np.asarray(excluded, dtype=np.int64)
        keep = (items != PADDING_ITEM) & (items != targets[:, np.newaxis])
        row_index = np.broadcast_to(rows[:, np.newaxis], items.shape)
        logits[row_index[keep], items[keep] - 1] = -np.inf
    scores = logits[rows, columns][:, np.newaxis]
    greater = np.count_nonzero(logits > scores, axis=1)
    before = np.arange(logits.shape[1])[np.newaxis, :] < columns[:, np.newaxis]
    tied = np.count_nonzero((logits == scores) & before, axis=1)
    return 1 + greater + tied


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}.")


def hr_at_k(ranks: Sequence[int], k: int) -> Optional[float]:
    """Fraction of events ranked within the top K; None when there are no events."""
    _check_k(k)
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        return None
    return float(np.count_nonzero(ranks <= k) / ranks.size)


def ndcg_at_k(ranks: Sequence[int], k: int) -> Optional[float]:
    """Mean of 1 / log2(1 + rank) over events ranked within K, 0 otherwise; None without events."""
    _check_k(k)
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        return None
    gains = np.where(ranks <= k, 1.0 / np.log2(1.0 + ranks), 0.0)
    return float(gains.mean())


def hits_at_k(ranks: Sequence[int], k: int) -> int:
    _check_k(k)
    return int(np.count_nonzero(np.asarray(ranks) <= k))


@dataclass
class MetricsReport:
    """Ranking quality of one model on one split.

    Metric tables are keyed by behavior ("click", "purchase") and then by K. A behavior with no
    evaluated events carries None. Aggregated reports keep the per-seed standard deviation in
    ``spread`` under "hr" and "ndcg". ``step`` is the training step of the evaluated checkpoint.
    """

    ks: Tuple[int, ...]
    hr: Dict[str, Dict[int, Optional[float]]]
    ndcg: Dict[str, Dict[int, Optional[float]]]
    hits: Dict[str, Dict[int, float]]
    cumulative_reward: Dict[int, float]
    counts: Dict[str, int]
    split: str = "test"
    seed: Optional[int] = None
    step: Optional[int] = None
    config_digest: str = ""
    seeds: List[int] = field(default_factory=list)
    spread: Dict[str, Dict[str, Dict[int, Optional[float]]]] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_ranks(
        cls,
        ranks: Dict[str, np.ndarray],
        ks: Sequence[int] = DEFAULT_KS,
        click_reward: float = CLICK_REWARD,
        purchase_reward: float = PURCHASE_REWARD,
        **meta: Any,
    ) -> MetricsReport:
        """Build a report from the ranks of the click events and of the purchase events."""
        ks = tuple(int(k) for k in ks)
        behaviors = Behavior.list()
        per_behavior = {b: np.asarray(ranks.get(b, []), dtype=np.int64) for b in behaviors}
        hits = {b: {k: float(hits_at_k(per_behavior[b], k)) for k in ks} for b in behaviors}
        cumulative = {
            k: click_reward * hits[Behavior.CLICK.value][k]
            + purchase_reward * hits[Behavior.PURCHASE.value][k]
            for k in ks
        }
        return cls(
            ks=ks,
            hr={b: {k: hr_at_k(per_behavior[b], k) for k in ks} for b in behaviors},
            ndcg={b: {k: ndcg_at_k(per_behavior[b], k) for k in ks} for b in behaviors},
            hits=hits,
            cumulative_reward=cumulative,
            counts={b: int(per_behavior[b].size) for b in behaviors},
            **meta,
        )

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["ks"] = list(self.ks)
        return json.loads(json.dumps(payload))

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> MetricsReport:
        """Inverse of to_dict; JSON object keys for K come back as ints."""
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"Unsupported report schema {payload.get('schema_version')!r}.")

        def by_k(table: Dict[str, Any]) -> Dict[int, Any]:
            return {int(k): v for k, v in table.items()}

        def nested(table: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[int, Any]]:
            return {name: by_k(values) for name, values in table.items()}

        return cls(
            ks=tuple(int(k) for k in payload["ks"]),
            hr=nested(payload["hr"]),
            ndcg=nested(payload["ndcg"]),
            hits=nested(payload["hits"]),
            cumulative_reward=by_k(payload["cumulative_reward"]),
            counts={k: int(v) for k, v in payload["counts"].items()},
            split=payload.get("split", "test"),
            seed=payload.get("seed"),
            step=payload.get("step"),
            config_digest=payload.get("config_digest", ""),
            seeds=list(payload.get("seeds", [])),
            spread={name: nested(table) for name, table in payload.get("spread", {}).items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> MetricsReport:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_frame(self) -> pd.DataFrame:
        """One row per (behavior, K)."""
        rows = []
        for behavior in self.hr:
            for k in self.ks:
                row = {
                    "behavior": behavior,
                    "k": k,
                    "hr": self.hr[behavior][k],
                    "ndcg": self.ndcg[behavior][k],
                    "hits": self.hits[behavior][k],
                    "count": self.counts[behavior],
                    "cumulative_reward": self.cumulative_reward[k],
                }
                for metric, table in self.spread.items():
                    row[f"{metric}_std"] = table[behavior][k]
                rows.append(row)
        return pd.DataFrame(rows)


def _mean_std(values: List[Optional[float]]) -> Tuple[Optional[float], Optional[float]]:
    present = [v for v in values if v is not None]
    if not present:
        return None, None
    mean = math.fsum(present) / len(present)
    return mean, float(np.std(present))


def aggregate_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean over seeds, with the population standard deviation of HR and NDCG in ``spread``."""
    if not reports:
        raise ValueError("Nothing to aggregate.")
    first = reports[0]
    if any(r.ks != first.ks or r.split != first.split for r in reports):
        raise ValueError("Reports differ in K list or split.")
    behaviors = list(first.hr)

    def combine(metric: str) -> Tuple[Dict[str, Dict[int, Any]], Dict[str, Dict[int, Any]]]:
        means: Dict[str, Dict[int, Any]] = {}
        stds: Dict[str, Dict[int, Any]] = {}
        for behavior in behaviors:
            means[behavior], stds[behavior] = {}, {}
            for k in first.ks:
                mean, std = _mean_std([getattr(r, metric)[behavior][k] for r in reports])
                means[behavior][k], stds[behavior][k] = mean, std
        return means, stds

    hr, hr_std = combine("hr")
    ndcg, ndcg_std = combine("ndcg")
    hits, _ = combine("hits")
    cumulative = {
        k: math.fsum(r.cumulative_reward[k] for r in reports) / len(reports) for k in first.ks
    }
    counts = {
        b: int(round(math.fsum(r.counts[b] for r in reports) / len(reports))) for b in behaviors
    }
    seeds = [r.seed for r in reports if r.seed is not None]
    return MetricsReport(
        ks=first.ks,
        hr=hr,
        ndcg=ndcg,
        hits=hits,
        cumulative_reward=cumulative,
        counts=counts,
        split=first.split,
        seed=None,
        step=first.step if len({r.step for r in reports}) == 1 else None,
        config_digest=first.config_digest if len({r.config_digest for r in reports}) == 1 else "",
        seeds=seeds,
        spread={"hr": hr_std, "ndcg": ndcg_std},
    )
