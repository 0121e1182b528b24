"""
Shared fixtures: a small synthetic log and the dataset built from it.
"""
import pandas as pd
import pytest

from recrl.data.cache import PreprocessedDataset
from recrl.data.dataset import DatasetSplit, filter_and_split
from recrl.data.synthetic import SyntheticConfig, generate_sessions


@pytest.fixture(scope="session")
def synthetic_frame() -> pd.DataFrame:
    return generate_sessions(
        SyntheticConfig(n_items=30, n_sessions=120, max_length=8, purchase_rate=0.2, seed=3)
    )


@pytest.fixture(scope="session")
def synthetic_split(synthetic_frame: pd.DataFrame) -> DatasetSplit:
    return filter_and_split(synthetic_frame, seed=0)


@pytest.fixture(scope="session")
def small_dataset(synthetic_split: DatasetSplit) -> PreprocessedDataset:
    return PreprocessedDataset.from_split(synthetic_split, config_digest="fixture")
