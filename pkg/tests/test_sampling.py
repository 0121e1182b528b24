"""
Test sampling module.
"""
import numpy as np
import pytest
from helpers import make_session
from scipy import stats

from recrl.data.cache import PreprocessedDataset
from recrl.data.dataset import TransitionTable
from recrl.data.sampling import BatchSampler, draw_batch_negatives, sample_negative_actions
from recrl.exceptions import NegativeSamplingError


@pytest.fixture(scope="module")
def toy_table() -> TransitionTable:
    sessions = [make_session(f"s{i}", [1 + i, 2 + i, 3 + i, 4 + i]) for i in range(5)]
    return TransitionTable.from_sessions(sessions)


def test_batch_larger_than_dataset(toy_table: TransitionTable) -> None:
    sampler = BatchSampler(toy_table, batch_size=100, rng=np.random.default_rng(0))
    batch = sampler.sample_batch()
    assert len(batch) == len(toy_table)
    assert sorted(batch.indices.tolist()) == list(range(len(toy_table)))
    sampler.sample_batch()
    assert sampler.epoch == 2


def test_last_batch_of_epoch_is_smaller(toy_table: TransitionTable) -> None:
    sampler = BatchSampler(toy_table, batch_size=4, rng=np.random.default_rng(0))
    sizes = [len(sampler.sample_batch()) for _ in range(4)]
    assert sizes == [4, 4, 4, 3]


def test_fixed_seed_gives_identical_batches(small_dataset: PreprocessedDataset) -> None:
    table = small_dataset.table("train")
    first = BatchSampler(table, batch_size=32, rng=np.random.default_rng(11))
    second = BatchSampler(table, batch_size=32, rng=np.random.default_rng(11))
    for _ in range(10):
        np.testing.assert_array_equal(first.sample_batch().indices, second.sample_batch().indices)


def test_sampling_is_uniform_over_transitions(toy_table: TransitionTable) -> None:
    sampler = BatchSampler(toy_table, batch_size=7, rng=np.random.default_rng(1))
    counts = np.zeros(len(toy_table))
    drawn = 0
    while drawn < 100_000:
        batch = sampler.sample_batch()
        np.add.at(counts, batch.indices, 1)
        drawn += len(batch)
    _, p_value = stats.chisquare(counts)
    assert p_value > 1e-3


def test_batch_columns_match_table(toy_table: TransitionTable) -> None:
    batch = BatchSampler(toy_table, batch_size=5, rng=np.random.default_rng(2)).sample_batch()
    np.testing.assert_array_equal(batch.states, toy_table.states[batch.indices])
    np.testing.assert_array_equal(batch.actions, toy_table.actions[batch.indices])
    assert batch.negatives is None


def test_negatives_exclude_session_items() -> None:
    rng = np.random.default_rng(0)
    negatives = sample_negative_actions(np.array([1, 2]), 3, 5, rng)
    assert negatives.shape == (3,)
    assert set(negatives.tolist()) <= {3, 4, 5}


def test_zero_negatives() -> None:
    assert sample_negative_actions(np.array([1]), 0, 5, np.random.default_rng(0)).size == 0


def test_negatives_are_uniform_over_eligible_items() -> None:
    rng = np.random.default_rng(5)
    session = np.array([2, 5, 7])
    draws = sample_negative_actions(session, 100_000, 10, rng)
    assert not np.isin(draws, session).any()
    eligible = np.setdiff1d(np.arange(1, 11), session)
    counts = np.array([np.count_nonzero(draws == item) for item in eligible])
    assert counts.sum() == 100_000
    _, p_value = stats.chisquare(counts)
    assert p_value > 1e-4


def test_no_eligible_item() -> None:
    with pytest.raises(NegativeSamplingError):
        sample_negative_actions(np.array([1, 2, 3]), 2, 3, np.random.default_rng(0))


def test_batch_negatives(small_dataset: PreprocessedDataset) -> None:
    table = small_dataset.table("train")
    batch = BatchSampler(table, batch_size=16, rng=np.random.default_rng(3)).sample_batch()
    batch = draw_batch_negatives(batch, table, 30, small_dataset.item_count, np.random.default_rng(4))
    assert batch.negatives.shape == (16, 30)
    for owner, negatives in zip(batch.session_index, batch.negatives):
        assert not np.isin(negatives, table.items_of_session(int(owner))).any()
        assert np.all(negatives >= 1)
