"""Hyperparameters of one training run."""
from dataclasses import asdict, dataclass
from typing import Any, Dict

from recrl.exceptions import ConfigError


@dataclass
class TrainConfig:
    """Learning settings of one run.

    Attributes
    ----------
    gamma: float
        Discount factor, 0.5.
    expectile: float
        tau of the expectile value loss, 0.7.
    temperature: float
        InfoNCE temperature, 1.0.
    alpha: float
        Weight of the policy term in the policy-extraction objective, 1.0.
    num_negatives: int
        Negative actions per transition, 30.
    batch_size: int
        256.
    learning_rate: float
        Adam learning rate of both networks, 0.005.
    polyak: float
        Rate sigma of the target-network tracking, 0.005 per step.
    total_steps: int
    seed: int
    use_reward_model, use_transition_model: bool
        Turn the auxiliary heads on or off (MCRL-none, MCRL-reward, MCRL-state).
    contrastive: bool
        Use negative actions in the auxiliary losses (off = MCRL w/o CL).
    reward_reweight: bool
        Weight the positive auxiliary terms by the reward.
    clamp_weight: bool
        Clamp the policy-extraction weight at 0.
    grad_through_next_state: bool
        Let the InfoNCE gradient flow through z' = G(s').
    supervised: bool
        Plain next-item cross-entropy: no value learning, weight 1, no auxiliary heads.
    """

    gamma: float = 0.5
    expectile: float = 0.7
    temperature: float = 1.0
    alpha: float = 1.0
    num_negatives: int = 30
    batch_size: int = 256
    learning_rate: float = 0.005
    polyak: float = 0.005
    total_steps: int = 2000
    seed: int = 0
    use_reward_model: bool = True
    use_transition_model: bool = True
    contrastive: bool = True
    reward_reweight: bool = False
    clamp_weight: bool = False
    grad_through_next_state: bool = False
    supervised: bool = False

    def validate(self) -> None:
        """Raise ConfigError on an out-of-range value."""
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}.")
        if not 0.0 < self.expectile < 1.0:
            raise ConfigError(f"expectile must lie in (0, 1), got {self.expectile}.")
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}.")
        if self.num_negatives < 1:
            raise ConfigError(f"num_negatives must be at least 1, got {self.num_negatives}.")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}.")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}.")
        if not 0.0 < self.polyak <= 1.0:
            raise ConfigError(f"polyak must lie in (0, 1], got {self.polyak}.")
        if self.total_steps < 0:
            raise ConfigError(f"total_steps must be non-negative, got {self.total_steps}.")

    @property
    def learns_value(self) -> bool:
        return not self.supervised

    @property
    def learns_reward_model(self) -> bool:
        return self.use_reward_model and not self.supervised

    @property
    def learns_transition_model(self) -> bool:
        return self.use_transition_model and not self.supervised

    @property
    def needs_negatives(self) -> bool:
        return self.contrastive and (self.learns_reward_model or self.learns_transition_model)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
