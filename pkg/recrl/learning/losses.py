"""
Loss terms of the value-weighted policy extraction.

All functions return scalar DifferentiableArrays built on the active tape. Targets that must not
receive gradients (the bootstrap value, the extraction weights, and z' unless asked otherwise) are
computed under no_grad and enter the graph as constants.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from recrl.autodiff import functional as F
from recrl.autodiff.tensor import DifferentiableArray, constant, no_grad
from recrl.data.sampling import Batch
from recrl.learning.config import TrainConfig
from recrl.models.networks import MCRLNetworks, PolicyNet, ValueNet

logger = logging.getLogger(__name__)

NEGATIVE_CLASS = 0
CLICK_CLASS = 1
PURCHASE_CLASS = 2


def expectile_loss(residual: DifferentiableArray, tau: float) -> DifferentiableArray:
    """|tau - 1(u < 0)| * u^2, elementwise."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}.")
    weight = np.abs(tau - (residual.values < 0.0).astype(np.float64))
    return F.mul(constant(weight), F.mul(residual, residual))


def td_targets(batch: Batch, target: ValueNet, gamma: float) -> np.ndarray:
    """r + gamma * (1 - done) * V'(s') as plain values."""
    with no_grad():
        next_values = target(batch.next_states).values
    continuing = (~batch.terminals.astype(bool)).astype(np.float64)
    return batch.rewards + gamma * continuing * next_values


def value_loss(batch: Batch, value: ValueNet, target: ValueNet, cfg: TrainConfig) -> DifferentiableArray:
    """Mean expectile loss of the TD residual r + gamma * V'(s') - V(s)."""
    residual = F.sub(constant(td_targets(batch, target, cfg.gamma)), value(batch.states))
    return F.mean(expectile_loss(residual, cfg.expectile))


def _repeat_rows(x: DifferentiableArray, times: int) -> DifferentiableArray:
    return F.take_rows(x, np.repeat(np.arange(x.shape[0]), times))


def _require_negatives(batch: Batch) -> np.ndarray:
    if batch.negatives is None:
        raise ValueError("The batch carries no negative actions.")
    return batch.negatives


def reward_contrastive_loss(
    batch: Batch,
    policy: PolicyNet,
    z: Optional[DifferentiableArray] = None,
    contrastive: bool = True,
    reward_weighted: bool = False,
) -> DifferentiableArray:
    """Three-way cross-entropy of the reward head.

    The observed action of every transition is labelled click or purchase; each of its M negative
    actions is labelled negative. Per transition the positive term and the sum over negatives are
    added, then averaged over the batch.
    """
    if z is None:
        z = policy.encode(batch.states)
    labels = np.where(batch.purchases.astype(bool), PURCHASE_CLASS, CLICK_CLASS)
    per_row = F.cross_entropy(policy.reward_logits(z, batch.actions), labels, reduction="none")
    if reward_weighted:
        per_row = F.mul(per_row, constant(batch.rewards))
    if contrastive:
        negatives = _require_negatives(batch)
        n, m = negatives.shape
        negative_ce = F.cross_entropy(
            policy.reward_logits(_repeat_rows(z, m), negatives.reshape(-1)),
            np.full(n * m, NEGATIVE_CLASS, dtype=np.int64),
            reduction="none",
        )
        per_row = F.add(per_row, F.sum(F.reshape(negative_ce, (n, m)), axis=1))
    return F.mean(per_row)


def transition_infonce_loss(
    batch: Batch,
    policy: PolicyNet,
    z: Optional[DifferentiableArray] = None,
    temperature: float = 1.0,
    grad_through_next_state: bool = False,
    contrastive: bool = True,
    reward_weighted: bool = False,
) -> DifferentiableArray:
    """InfoNCE over cosine similarities between predicted and actual next representations.

    Class 0 is the observed action; the M negatives follow. Without negatives the loss is the
    mean of 1 - cos(T(z, a), z').
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}.")
    if z is None:
        z = policy.encode(batch.states)
    if grad_through_next_state:
        z_next = policy.encode(batch.next_states)
    else:
        with no_grad():
            z_next = policy.encode(batch.next_states)
    positive = F.cosine_similarity(policy.predict_next(z, batch.actions), z_next)
    n = positive.shape[0]
    if contrastive:
        negatives = _require_negatives(batch)
        m = negatives.shape[1]
        negative = F.cosine_similarity(
            policy.predict_next(_repeat_rows(z, m), negatives.reshape(-1)),
            _repeat_rows(z_next, m),
        )
        logits = F.scale(
            F.concat([F.reshape(positive, (n, 1)), F.reshape(negative, (n, m))], axis=1),
            1.0 / temperature,
        )
        per_row = F.cross_entropy(logits, np.zeros(n, dtype=np.int64), reduction="none")
    else:
        per_row = F.sub(constant(np.ones(n)), positive)
    if reward_weighted:
        per_row = F.mul(per_row, constant(batch.rewards))
    return F.mean(per_row)


def extraction_weights(batch: Batch, target: ValueNet, cfg: TrainConfig) -> np.ndarray:
    """w = r + gamma * (1 - done) * V'(s'); all ones for supervised training."""
    if not cfg.learns_value:
        return np.ones(len(batch))
    weights = td_targets(batch, target, cfg.gamma)
    return np.maximum(weights, 0.0) if cfg.clamp_weight else weights


def policy_extraction_loss(
    batch: Batch,
    target: ValueNet,
    policy: PolicyNet,
    cfg: TrainConfig,
    z: Optional[DifferentiableArray] = None,
) -> DifferentiableArray:
    """Mean of w * cross_entropy(policy logits, action)."""
    if z is None:
        z = policy.encode(batch.states)
    per_row = F.cross_entropy(policy.policy_logits(z), batch.actions - 1, reduction="none")
    return F.mean(F.mul(constant(extraction_weights(batch, target, cfg)), per_row))


def combine_losses(
    alpha: float,
    policy_loss: DifferentiableArray,
    reward_loss: Optional[DifferentiableArray] = None,
    transition_loss: Optional[DifferentiableArray] = None,
) -> DifferentiableArray:
    """alpha * L_policy + L_reward + L_transition, skipping absent terms."""
    total = F.scale(policy_loss, alpha)
    for term in (reward_loss, transition_loss):
        if term is not None:
            total = F.add(total, term)
    return total


@dataclass
class PolicyObjective:
    """The combined policy-network loss and its components."""

    total: DifferentiableArray
    policy: DifferentiableArray
    reward: Optional[DifferentiableArray] = None
    transition: Optional[DifferentiableArray] = None

    def components(self) -> Dict[str, float]:
        parts = {"policy_loss": self.policy.item(), "combined": self.total.item()}
        if self.reward is not None:
            parts["reward_loss"] = self.reward.item()
        if self.transition is not None:
            parts["transition_loss"] = self.transition.item()
        return parts


def combined_policy_loss(batch: Batch, nets: MCRLNetworks, cfg: TrainConfig) -> PolicyObjective:
    """alpha * L_policy + L_reward + L_transition on one shared encoding of the batch states."""
    z = nets.policy.encode(batch.states)
    policy = policy_extraction_loss(batch, nets.target, nets.policy, cfg, z=z)
    reward = None
    transition = None
    if cfg.learns_reward_model:
        reward = reward_contrastive_loss(
            batch,
            nets.policy,
            z=z,
            contrastive=cfg.contrastive,
            reward_weighted=cfg.reward_reweight,
        )
    if cfg.learns_transition_model:
        transition = transition_infonce_loss(
            batch,
            nets.policy,
            z=z,
            temperature=cfg.temperature,
            grad_through_next_state=cfg.grad_through_next_state,
            contrastive=cfg.contrastive,
            reward_weighted=cfg.reward_reweight,
        )
    total = combine_losses(cfg.alpha, policy, reward, transition)
    return PolicyObjective(total=total, policy=policy, reward=reward, transition=transition)
