"""
Desk-scale acceptance runs on the planted synthetic log.

Marked slow; run them with ``pytest -m slow``.
"""
import os
from typing import Any, Dict

import numpy as np
import pytest

from recrl.data.cache import PreprocessedDataset
from recrl.data.dataset import filter_and_split
from recrl.data.events import FormatSpec, read_events_frame
from recrl.data.synthetic import SyntheticConfig, generate_sessions
from recrl.evaluation.evaluate import evaluate
from recrl.learning.config import TrainConfig
from recrl.learning.trainer import MCRLTrainer
from recrl.models.networks import MCRLNetworks

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
STEPS = 600
RETAILROCKET_ENV = "RECRL_RETAILROCKET"


@pytest.fixture(scope="module")
def desk_dataset() -> PreprocessedDataset:
    split = filter_and_split(generate_sessions(SyntheticConfig()), seed=0)
    return PreprocessedDataset.from_split(split)


def _purchase_hr10(dataset: PreprocessedDataset, **settings) -> Dict[str, Any]:
    scores = []
    losses = []
    for seed in SEEDS:
        nets = MCRLNetworks.initialize(dataset.item_count, seed=seed)
        cfg = TrainConfig(total_steps=STEPS, seed=seed, **settings)
        reports = MCRLTrainer(nets, dataset, cfg, progress=False).fit()
        losses.append([r.policy_loss for r in reports])
        scores.append(evaluate(nets, dataset.table("test")).hr["purchase"][10])
    return {"hr": float(np.mean(scores)), "losses": np.mean(losses, axis=0)}


@pytest.fixture(scope="module")
def supervised(desk_dataset: PreprocessedDataset):
    return _purchase_hr10(desk_dataset, supervised=True)


@pytest.fixture(scope="module")
def full(desk_dataset: PreprocessedDataset):
    return _purchase_hr10(desk_dataset)


def test_full_model_beats_supervised(full, supervised) -> None:
    assert full["hr"] >= supervised["hr"]


def test_policy_loss_decreases(full) -> None:
    averages = np.convolve(full["losses"], np.ones(50) / 50, mode="valid")[::50]
    assert np.all(np.diff(averages) < 0)


def test_full_model_beats_no_auxiliary_heads(desk_dataset: PreprocessedDataset, full) -> None:
    none = _purchase_hr10(desk_dataset, use_reward_model=False, use_transition_model=False)
    assert full["hr"] >= none["hr"]


@pytest.fixture(scope="module")
def retailrocket_frame():
    if RETAILROCKET_ENV not in os.environ:
        pytest.skip(f"set {RETAILROCKET_ENV} to events.csv")
    return read_events_frame(os.environ[RETAILROCKET_ENV], FormatSpec.preset("retailrocket"))


def test_retailrocket_statistics(retailrocket_frame) -> None:
    stats = filter_and_split(retailrocket_frame, seed=0).statistics()
    assert stats["items"] == 70_852
    assert stats["clicks"] == 1_176_680
    assert stats["purchases"] == 57_269


def test_retailrocket_subsample_end_to_end(retailrocket_frame) -> None:
    split = filter_and_split(retailrocket_frame, seed=0, sample_sessions=5000)
    assert 0 < split.statistics()["sessions"] <= 5000
    dataset = PreprocessedDataset.from_split(split)
    nets = MCRLNetworks.initialize(dataset.item_count, seed=0)
    reports = MCRLTrainer(nets, dataset, TrainConfig(total_steps=2000, seed=0), progress=False).fit()
    assert len(reports) == 2000
    assert all(np.isfinite(r.combined) for r in reports)
    report = evaluate(nets, dataset.table("test"))
    assert sum(report.counts.values()) == len(dataset.table("test"))
    assert report.hr["purchase"][10] is None or 0.0 <= report.hr["purchase"][10] <= 1.0
