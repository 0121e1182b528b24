"""
Test synthetic module.
"""
from pathlib import Path

import pandas as pd
import pytest

from recrl.data.events import FormatSpec, read_events_frame
from recrl.data.synthetic import SyntheticConfig, generate_sessions, write_synthetic


@pytest.fixture(scope="module")
def frame() -> pd.DataFrame:
    return generate_sessions(SyntheticConfig(n_items=50, n_sessions=2000, purchase_rate=0.1, seed=1))


def test_shape_of_the_log(frame: pd.DataFrame) -> None:
    assert frame["item_id"].between(1, 50).all()
    lengths = frame.groupby("session_id").size()
    assert len(lengths) == 2000
    assert lengths.between(3, 12).all()
    assert set(frame["behavior"]) == {"click", "purchase"}


def test_purchase_share(frame: pd.DataFrame) -> None:
    share = (frame["behavior"] == "purchase").mean()
    assert share == pytest.approx(0.1, abs=0.02)


def test_planted_successors(frame: pd.DataFrame) -> None:
    pairs = pd.DataFrame(
        {
            "current": frame["item_id"].to_numpy()[:-1],
            "following": frame["item_id"].to_numpy()[1:],
            "same_session": frame["session_id"].to_numpy()[:-1] == frame["session_id"].to_numpy()[1:],
        }
    )
    pairs = pairs[pairs["same_session"]]
    top_two = (
        pairs.groupby("current")["following"]
        .agg(lambda s: s.value_counts().iloc[:2].sum() / len(s))
        .mean()
    )
    # 80% of moves go to one of two planted successors, far above the uniform 2/50
    assert top_two > 0.6


def test_generation_is_deterministic() -> None:
    cfg = SyntheticConfig(n_items=20, n_sessions=50, seed=4)
    pd.testing.assert_frame_equal(generate_sessions(cfg), generate_sessions(cfg))


def test_written_log_parses(tmp_path: Path) -> None:
    path = tmp_path / "log.csv"
    written = write_synthetic(path, SyntheticConfig(n_items=10, n_sessions=20, seed=2))
    parsed = read_events_frame(path, FormatSpec())
    assert len(parsed) == len(written)


@pytest.mark.parametrize(
    "overrides",
    [{"n_items": 1}, {"purchase_rate": 1.5}, {"premium_share": 0.0}, {"min_length": 5, "max_length": 4}],
)
def test_invalid_config(overrides) -> None:
    with pytest.raises(ValueError):
        generate_sessions(SyntheticConfig(**overrides))
