"""
Training loop.

One step updates the value network by Adam on the expectile loss, moves the target network
towards it, draws negative actions and finally updates the policy network on the combined
objective, which reads the freshly moved target.
"""
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np
from tqdm import tqdm

from recrl.autodiff.optim import AdamState, adam_step
from recrl.autodiff.tensor import DifferentiableArray, Tape
from recrl.data.cache import PreprocessedDataset
from recrl.data.dataset import TransitionTable
from recrl.data.sampling import Batch, BatchSampler, draw_batch_negatives
from recrl.exceptions import CheckpointError, NumericError
from recrl.learning.config import TrainConfig
from recrl.learning.losses import combined_policy_loss, value_loss
from recrl.models.networks import MCRLNetworks, ValueNet, save_checkpoint
from recrl.utils import spawn_rngs

logger = logging.getLogger(__name__)

STEP_LOG = "step_log.jsonl"
FINAL_CHECKPOINT = "model.srlc"
CHECKPOINT_DIR = "checkpoints"
NONFINITE_DUMP = "nonfinite_batch.json"


@dataclass
class StepReport:
    """Losses of one training step; absent components are None."""

    step: int
    policy_loss: float
    combined: float
    value_loss: Optional[float] = None
    reward_loss: Optional[float] = None
    transition_loss: Optional[float] = None
    wall_clock: float = 0.0
    notes: Dict[str, int] = field(default_factory=dict)

    def losses(self) -> Dict[str, float]:
        """Loss components only, without timing."""
        values = {
            "value_loss": self.value_loss,
            "policy_loss": self.policy_loss,
            "reward_loss": self.reward_loss,
            "transition_loss": self.transition_loss,
            "combined": self.combined,
        }
        return {name: value for name, value in values.items() if value is not None}

    def to_record(self, config_digest: str = "") -> Dict[str, Any]:
        return {
            "step": self.step,
            **self.losses(),
            "wall_clock": self.wall_clock,
            "config_digest": config_digest,
        }


@dataclass
class OptimizerStates:
    value: AdamState
    policy: AdamState

    @classmethod
    def for_networks(cls, nets: MCRLNetworks, learning_rate: float) -> "OptimizerStates":
        return cls(
            value=AdamState.for_parameters(nets.value.parameters(), learning_rate),
            policy=AdamState.for_parameters(nets.policy.parameters(), learning_rate),
        )


def polyak_update(target: ValueNet, online: ValueNet, sigma: float) -> None:
    """theta' <- sigma * theta + (1 - sigma) * theta', in place.

    Raises
    ------
    CheckpointError
        If the two networks do not share a parameter manifest.
    """
    if not 0.0 < sigma <= 1.0:
        raise ValueError(f"sigma must lie in (0, 1], got {sigma}.")
    target_params = target.parameters()
    online_params = online.parameters()
    if set(target_params) != set(online_params) or any(
        target_params[name].shape != online_params[name].shape for name in target_params
    ):
        raise CheckpointError("Target and online value networks have different manifests.")
    for name, theta_target in target_params.items():
        theta_target.values[...] = (
            sigma * online_params[name].values + (1.0 - sigma) * theta_target.values
        )


@contextmanager
def _attach_batch(batch: Batch) -> Iterator[None]:
    try:
        yield
    except NumericError as err:
        if err.batch is not None:
            raise
        raise NumericError(str(err), batch=batch) from err


def _check_finite(name: str, loss: DifferentiableArray, batch: Batch) -> None:
    if not np.isfinite(loss.item()):
        raise NumericError(f"{name} is not finite ({loss.item()}).", batch=batch)


def train_step(
    batch: Batch,
    nets: MCRLNetworks,
    optimizers: OptimizerStates,
    cfg: TrainConfig,
    table: TransitionTable,
    item_count: int,
    rng: np.random.Generator,
    step: int = 0,
) -> StepReport:
    """One value update, one target move and one policy update on ``batch``.

    Raises
    ------
    NumericError
        If a loss is not finite; the exception carries the batch.
    """
    start = time.perf_counter()
    notes: Dict[str, int] = {}
    value_component = None
    if cfg.learns_value:
        with Tape() as tape, _attach_batch(batch):
            loss_v = value_loss(batch, nets.value, nets.target, cfg)
        _check_finite("value_loss", loss_v, batch)
        tape.backward(loss_v)
        adam_step(nets.value.parameters(), optimizers.value)
        polyak_update(nets.target, nets.value, cfg.polyak)
        value_component = loss_v.item()
    if cfg.needs_negatives:
        batch = draw_batch_negatives(batch, table, cfg.num_negatives, item_count, rng)
    with Tape() as tape, _attach_batch(batch):
        objective = combined_policy_loss(batch, nets, cfg)
    _check_finite("policy objective", objective.total, batch)
    tape.backward(objective.total)
    adam_step(nets.policy.parameters(), optimizers.policy)
    notes.update(tape.notes)
    if notes:
        logger.debug("Step %d tape notes: %s", step, notes)
    parts = objective.components()
    return StepReport(
        step=step,
        policy_loss=parts["policy_loss"],
        combined=parts["combined"],
        value_loss=value_component,
        reward_loss=parts.get("reward_loss"),
        transition_loss=parts.get("transition_loss"),
        wall_clock=time.perf_counter() - start,
        notes=notes,
    )


class MCRLTrainer:
    """Runs train_step on the training split and writes the run directory.

    Parameters
    ----------
    nets: MCRLNetworks
    dataset: PreprocessedDataset
    cfg: TrainConfig
    run_dir: Path, optional
        Receives step_log.jsonl, checkpoints and the final model; nothing is written when None.
    config_digest: str
        Embedded in every step record and checkpoint.
    progress: bool
        Show a tqdm bar.
    log_every: int
    checkpoint_every: int
        Write an intermediate checkpoint every that many steps; 0 disables.
    """

    def __init__(
        self,
        nets: MCRLNetworks,
        dataset: PreprocessedDataset,
        cfg: TrainConfig,
        run_dir: Optional[Union[str, Path]] = None,
        config_digest: str = "",
        progress: bool = True,
        log_every: int = 100,
        checkpoint_every: int = 0,
    ) -> None:
        cfg.validate()
        self.nets = nets
        self.dataset = dataset
        self.cfg = cfg
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.config_digest = config_digest
        self.progress = progress
        self.log_every = log_every
        self.checkpoint_every = checkpoint_every
        self.table = dataset.table("train")
        batch_rng, self.negative_rng = spawn_rngs(cfg.seed, 2)
        self.sampler = BatchSampler(self.table, cfg.batch_size, rng=batch_rng)
        self.optimizers = OptimizerStates.for_networks(nets, cfg.learning_rate)
        self.step = 0

    def fit(self, total_steps: Optional[int] = None) -> List[StepReport]:
        """Train for ``total_steps`` (default cfg.total_steps) and save the final checkpoint."""
        steps = self.cfg.total_steps if total_steps is None else total_steps
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            if self.step == 0:
                (self.run_dir / STEP_LOG).unlink(missing_ok=True)
        reports: List[StepReport] = []
        logger.info(
            "Training %d steps on %d transitions (%s encoder).",
            steps,
            len(self.table),
            self.nets.kind.value,
        )
        bar = tqdm(range(steps), desc="train", disable=None if self.progress else True)
        for _ in bar:
            self.step += 1
            batch = self.sampler.sample_batch()
            try:
                report = train_step(
                    batch,
                    self.nets,
                    self.optimizers,
                    self.cfg,
                    self.table,
                    self.dataset.item_count,
                    self.negative_rng,
                    step=self.step,
                )
            except NumericError as err:
                self._dump_batch(err)
                raise
            reports.append(report)
            self._log_step(report)
            bar.set_postfix({k: f"{v:.4f}" for k, v in report.losses().items()})
            if self.checkpoint_every and self.step % self.checkpoint_every == 0:
                self.save(self._checkpoint_dir() / f"step_{self.step:07d}.srlc")
        if self.run_dir is not None:
            self.save(self.run_dir / FINAL_CHECKPOINT)
        return reports

    def save(self, path: Union[str, Path]) -> None:
        save_checkpoint(
            path,
            self.nets,
            {"config_digest": self.config_digest, "seed": self.cfg.seed, "step": self.step},
        )

    def _checkpoint_dir(self) -> Path:
        if self.run_dir is None:
            raise ValueError("Intermediate checkpoints need a run directory.")
        path = self.run_dir / CHECKPOINT_DIR
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _log_step(self, report: StepReport) -> None:
        if self.log_every and report.step % self.log_every == 0:
            logger.info(
                "step %d: %s",
                report.step,
                ", ".join(f"{k}={v:.5f}" for k, v in report.losses().items()),
            )
        if self.run_dir is None:
            return
        with open(self.run_dir / STEP_LOG, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(report.to_record(self.config_digest)) + "\n")

    def _dump_batch(self, err: NumericError) -> None:
        logger.error("Aborting at step %d: %s", self.step, err)
        if self.run_dir is None or not isinstance(err.batch, Batch):
            return
        path = self.run_dir / NONFINITE_DUMP
        with open(path, "w", encoding="utf-8") as handle:
            json.dump({"step": self.step, "error": str(err), **err.batch.to_dict()}, handle)
        logger.error("Offending batch written to %s.", path)
