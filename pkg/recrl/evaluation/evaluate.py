"""Replay held-out sessions event by event and rank the true next item."""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from recrl.autodiff.tensor import no_grad
from recrl.data.dataset import CLICK_REWARD, PURCHASE_REWARD, TransitionTable
from recrl.data.events import Behavior
from recrl.evaluation.metrics import DEFAULT_KS, MetricsReport, ranks_of_targets
from recrl.exceptions import ConfigError, EmptyDatasetError
from recrl.models.networks import MCRLNetworks, PolicyNet

logger = logging.getLogger(__name__)

Scorer = Callable[[np.ndarray], np.ndarray]


@dataclass
class EvalConfig:
    """Ranking protocol settings.

    Attributes
    ----------
    ks: Tuple[int, ...]
    batch_size: int
        Transitions scored per forward pass.
    exclude_seen: bool
        Push items of the current state window to the bottom of the ranking.
    click_reward, purchase_reward: float
        Used for cumulative reward@K.
    """

    ks: Tuple[int, ...] = DEFAULT_KS
    batch_size: int = 512
    exclude_seen: bool = False
    click_reward: float = CLICK_REWARD
    purchase_reward: float = PURCHASE_REWARD

    def validate(self) -> None:
        if not self.ks or min(self.ks) < 1:
            raise ConfigError(f"ks must be a non-empty list of positive integers, got {self.ks}.")
        if self.batch_size < 1:
            raise ConfigError(f"Evaluation batch size must be positive, got {self.batch_size}.")


def policy_scorer(policy: PolicyNet) -> Scorer:
    """Logits of the policy head, [B, |I|], without recording gradients."""

    def score(states: np.ndarray) -> np.ndarray:
        with no_grad():
            return policy.policy_logits(policy.encode(states)).values

    return score


def evaluate(
    model: Union[MCRLNetworks, PolicyNet, Scorer],
    table: TransitionTable,
    cfg: Optional[EvalConfig] = None,
    split: str = "test",
    seed: Optional[int] = None,
    config_digest: str = "",
    step: Optional[int] = None,
) -> MetricsReport:
    """Rank the next item of every transition of ``table`` among the whole catalog.

    Every transition of a split is one event with a non-empty prefix, so iterating the table
    replays each session from its second event onwards.

    Raises
    ------
    EmptyDatasetError
        If the split holds no transition.
    """
    cfg = cfg or EvalConfig()
    cfg.validate()
    if len(table) == 0:
        raise EmptyDatasetError(f"Split {split!r} has no events to evaluate.")
    if isinstance(model, MCRLNetworks):
        model = model.policy
    score = policy_scorer(model) if isinstance(model, PolicyNet) else model

    ranks = np.empty(len(table), dtype=np.int64)
    for start in range(0, len(table), cfg.batch_size):
        stop = min(start + cfg.batch_size, len(table))
        states = table.states[start:stop]
        ranks[start:stop] = ranks_of_targets(
            score(states),
            table.actions[start:stop],
            excluded=states if cfg.exclude_seen else None,
        )
    purchases = table.purchases.astype(bool)
    report = MetricsReport.from_ranks(
        {Behavior.CLICK.value: ranks[~purchases], Behavior.PURCHASE.value: ranks[purchases]},
        ks=cfg.ks,
        click_reward=cfg.click_reward,
        purchase_reward=cfg.purchase_reward,
        split=split,
        seed=seed,
        step=step,
        config_digest=config_digest,
    )
    logger.info(
        "Evaluated %d click and %d purchase events on %s.",
        report.counts[Behavior.CLICK.value],
        report.counts[Behavior.PURCHASE.value],
        split,
    )
    return report
