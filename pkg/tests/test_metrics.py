"""
Test metrics module.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from recrl.evaluation.metrics import (
    MetricsReport,
    aggregate_reports,
    hits_at_k,
    hr_at_k,
    ndcg_at_k,
    rank_of_target,
    ranks_of_targets,
)


def _sorted_rank(logits: np.ndarray, target: int) -> int:
    order = sorted(range(logits.size), key=lambda j: (-logits[j], j))
    return order.index(target - 1) + 1


def test_rank_examples() -> None:
    logits = np.array([0.1, 2.0, -1.0, 0.5])
    assert rank_of_target(logits, 2) == 1
    assert rank_of_target(logits, 3) == 4
    flat = np.zeros(7)
    assert rank_of_target(flat, 1) == 1
    assert rank_of_target(flat, 7) == 7


@pytest.mark.parametrize("target", [0, 5])
def test_rank_rejects_target(target: int) -> None:
    with pytest.raises(ValueError):
        rank_of_target(np.zeros(4), target)


def test_ranks_match_sort_oracle() -> None:
    rng = np.random.default_rng(0)
    # coarse integer logits to exercise ties
    logits = rng.integers(0, 6, size=(10_000, 20)).astype(float)
    targets = rng.integers(1, 21, size=10_000)
    ranks = ranks_of_targets(logits, targets)
    expected = [_sorted_rank(row, int(t)) for row, t in zip(logits, targets)]
    np.testing.assert_array_equal(ranks, expected)
    assert ranks[0] == rank_of_target(logits[0], int(targets[0]))


def test_constant_shift_keeps_ranks() -> None:
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(50, 12))
    targets = rng.integers(1, 13, size=50)
    np.testing.assert_array_equal(
        ranks_of_targets(logits, targets), ranks_of_targets(logits + 3.0, targets)
    )


def test_excluded_items_drop_to_the_bottom() -> None:
    logits = np.array([[5.0, 4.0, 3.0, 2.0]])
    assert ranks_of_targets(logits, np.array([3]))[0] == 3
    excluded = np.array([[0, 1, 2]])
    assert ranks_of_targets(logits, np.array([3]), excluded=excluded)[0] == 1
    own = np.array([[0, 3, 1]])
    assert ranks_of_targets(logits, np.array([3]), excluded=own)[0] == 2


def test_hit_ratio_examples() -> None:
    assert hr_at_k([1, 3, 11], 10) == pytest.approx(2 / 3)
    assert hr_at_k([1, 2, 3], 5) == 1.0
    assert hits_at_k([1, 3, 11], 10) == 2
    ranks = np.random.default_rng(2).integers(1, 50, size=1000)
    assert hr_at_k(ranks, 10) == sum(1 for r in ranks if r <= 10) / 1000


def test_ndcg_examples() -> None:
    assert ndcg_at_k([1], 5) == 1.0
    assert ndcg_at_k([3], 5) == pytest.approx(0.5)
    assert ndcg_at_k([6], 5) == 0.0
    assert ndcg_at_k([1, 3, 6], 5) == pytest.approx((1.0 + 0.5) / 3)


def test_empty_ranks_and_bad_k() -> None:
    assert hr_at_k([], 5) is None
    assert ndcg_at_k([], 5) is None
    with pytest.raises(ValueError):
        hr_at_k([1], 0)


def test_metric_orderings() -> None:
    ranks = np.random.default_rng(3).integers(1, 40, size=500)
    hrs = [hr_at_k(ranks, k) for k in (5, 10, 20)]
    ndcgs = [ndcg_at_k(ranks, k) for k in (5, 10, 20)]
    assert hrs == sorted(hrs)
    assert ndcgs == sorted(ndcgs)
    assert all(n <= h for n, h in zip(ndcgs, hrs))


@pytest.fixture(scope="module")
def report() -> MetricsReport:
    rng = np.random.default_rng(4)
    ranks = {"click": rng.integers(1, 30, size=200), "purchase": rng.integers(1, 30, size=40)}
    return MetricsReport.from_ranks(ranks, seed=7, config_digest="digest")


def test_report_contents(report: MetricsReport) -> None:
    assert report.ks == (5, 10, 20)
    assert report.counts == {"click": 200, "purchase": 40}
    for k in report.ks:
        expected = 0.2 * report.hits["click"][k] + 1.0 * report.hits["purchase"][k]
        assert report.cumulative_reward[k] == pytest.approx(expected)
        for behavior in ("click", "purchase"):
            assert report.ndcg[behavior][k] <= report.hr[behavior][k]
    assert len(report.to_frame()) == 6


def test_behavior_without_events() -> None:
    report = MetricsReport.from_ranks({"click": np.array([1, 2])})
    assert report.hr["purchase"][10] is None
    assert report.counts["purchase"] == 0
    assert report.cumulative_reward[10] == pytest.approx(0.4)


def test_report_json(tmp_path: Path, report: MetricsReport) -> None:
    path = tmp_path / "report.json"
    report.save(path)
    loaded = MetricsReport.load(path)
    assert loaded == report
    assert loaded.hr["click"][10] == report.hr["click"][10]


def test_report_schema_is_checked(report: MetricsReport) -> None:
    payload = report.to_dict()
    payload["schema_version"] = 99
    with pytest.raises(ValueError):
        MetricsReport.from_dict(payload)


def test_aggregate_identical_reports(report: MetricsReport) -> None:
    combined = aggregate_reports([report, report, report])
    for behavior in ("click", "purchase"):
        for k in report.ks:
            assert combined.hr[behavior][k] == pytest.approx(report.hr[behavior][k])
            assert combined.spread["hr"][behavior][k] == pytest.approx(0.0, abs=1e-15)
    assert combined.seeds == [7, 7, 7]
    assert combined.config_digest == "digest"


def test_aggregate_spread() -> None:
    first = MetricsReport.from_ranks({"click": [1, 50]}, ks=[10], seed=0)
    second = MetricsReport.from_ranks({"click": [1, 1]}, ks=[10], seed=1)
    combined = aggregate_reports([first, second])
    assert combined.hr["click"][10] == pytest.approx(0.75)
    assert combined.spread["hr"]["click"][10] == pytest.approx(0.25)
    assert combined.hr["purchase"][10] is None
    assert not math.isnan(combined.cumulative_reward[10])


def test_aggregate_rejects_mixed_ks() -> None:
    with pytest.raises(ValueError):
        aggregate_reports(
            [MetricsReport.from_ranks({}, ks=[5]), MetricsReport.from_ranks({}, ks=[10])]
        )
