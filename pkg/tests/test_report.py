"""
Test report module.
"""
import json
from pathlib import Path

import pandas as pd
import pytest

from recrl.evaluation.metrics import MetricsReport
from recrl.evaluation.report import (
    comparison_table,
    learning_curves,
    load_reports,
    metric_curves,
    report_stem,
    run_name,
    write_report,
)
from recrl.learning.trainer import CHECKPOINT_DIR, FINAL_CHECKPOINT, STEP_LOG


def _run(root: Path, name: str, ranks, losses=None) -> Path:
    run_dir = root / name
    run_dir.mkdir(parents=True)
    MetricsReport.from_ranks({"click": ranks, "purchase": ranks}, ks=[5, 10]).save(
        run_dir / "report_test.json"
    )
    if losses is not None:
        with open(run_dir / STEP_LOG, "w", encoding="utf-8") as handle:
            for step, loss in enumerate(losses, start=1):
                handle.write(json.dumps({"step": step, "policy_loss": loss, "combined": loss}) + "\n")
    return run_dir


def test_single_run_table(tmp_path: Path) -> None:
    run = _run(tmp_path, "mcrl", [1, 7, 30])
    table = comparison_table(load_reports([run]))
    assert list(table.index) == ["mcrl"]
    assert table.loc["mcrl", "hr@5/click"] == pytest.approx(1 / 3)
    assert table.loc["mcrl", "hr@10/purchase"] == pytest.approx(2 / 3)
    assert table.loc["mcrl", "reward@10"] == pytest.approx(2 * 0.2 + 2 * 1.0)


def test_baseline_deltas(tmp_path: Path) -> None:
    runs = [_run(tmp_path, "mcrl", [1, 2, 3]), _run(tmp_path, "supervised", [1, 20, 30])]
    table = comparison_table(load_reports(runs), baseline="supervised")
    assert table.loc["mcrl", "Δ hr@5/click"] == pytest.approx(2 / 3)
    assert table.loc["supervised", "Δ hr@5/click"] == 0.0
    with pytest.raises(ValueError):
        comparison_table(load_reports(runs), baseline="missing")


def test_broken_runs_are_skipped(tmp_path: Path) -> None:
    good = _run(tmp_path, "good", [1])
    corrupted = tmp_path / "corrupted"
    corrupted.mkdir()
    (corrupted / "report_test.json").write_text("{not json")
    empty = tmp_path / "empty"
    empty.mkdir()
    assert list(load_reports([good, corrupted, empty])) == ["good"]


def test_run_names(tmp_path: Path) -> None:
    assert run_name(tmp_path / "exp" / "seed_3") == "exp/seed_3"
    assert run_name(tmp_path / "exp") == "exp"


def test_learning_curves(tmp_path: Path) -> None:
    runs = [_run(tmp_path, "a", [1], losses=[3.0, 2.0]), _run(tmp_path, "b", [1])]
    curves = learning_curves(runs)
    assert set(curves["run"]) == {"a"}
    assert set(curves["metric"]) == {"policy_loss", "combined"}
    assert len(curves) == 4


def test_write_report(tmp_path: Path) -> None:
    runs = [
        _run(tmp_path / "runs", "mcrl", [1, 2], losses=[3.0, 2.5, 2.0]),
        _run(tmp_path / "runs", "none", [4, 9], losses=[3.0, 2.8, 2.7]),
    ]
    written = write_report(runs, tmp_path / "out", baseline="none")
    for key in ("comparison_txt", "comparison_csv", "curves_csv", "curves_png"):
        assert written[key].exists()
    frame = pd.read_csv(written["comparison_csv"], index_col="run")
    assert frame.loc["mcrl", "Δ hr@5/click"] == pytest.approx(0.5)
    assert "mcrl" in written["comparison_txt"].read_text()


def test_write_report_without_reports(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError):
        write_report([tmp_path], tmp_path / "out")


def _checkpoint_report(run_dir: Path, step: int, ranks) -> None:
    checkpoints = run_dir / CHECKPOINT_DIR
    checkpoints.mkdir(exist_ok=True)
    report = MetricsReport.from_ranks({"click": ranks, "purchase": ranks}, ks=[5, 10], step=step)
    report.save(checkpoints / f"{report_stem(checkpoints / f'step_{step:07d}.srlc')}.json")


def test_report_stem() -> None:
    assert report_stem(Path("seed_0") / FINAL_CHECKPOINT) == "report_test"
    assert report_stem(Path("step_0000040.srlc"), "validation") == "report_validation_step_0000040"


def test_metric_curves(tmp_path: Path) -> None:
    run = _run(tmp_path, "mcrl", [1])
    _checkpoint_report(run, 20, [30, 40])
    _checkpoint_report(run, 10, [30, 40, 50, 60])
    _run(tmp_path, "without_checkpoints", [1])
    points = metric_curves([run, tmp_path / "without_checkpoints"])
    assert set(points["run"]) == {"mcrl"}
    assert sorted(points["step"].unique()) == [10, 20]
    # the final report carries no step, so it is not a point of the curve
    assert len(points) == 2 * 2 * 2
    first = points[(points["step"] == 10) & (points["behavior"] == "purchase") & (points["k"] == 10)]
    assert first["hr"].item() == 0.0


def test_metric_curves_include_final_report(tmp_path: Path) -> None:
    run = tmp_path / "seed_0"
    run.mkdir()
    _checkpoint_report(run, 1, [20])
    MetricsReport.from_ranks({"click": [1], "purchase": [1]}, ks=[5], step=2).save(
        run / "report_test.json"
    )
    points = metric_curves([run])
    hr = points[points["k"] == 5].groupby("step")["hr"].first()
    assert hr.to_dict() == {1: 0.0, 2: 1.0}


def test_write_report_metric_curves(tmp_path: Path) -> None:
    run = _run(tmp_path, "mcrl", [1, 2])
    _checkpoint_report(run, 5, [1, 50])
    written = write_report([run], tmp_path / "out")
    assert written["metric_curves_png"].exists()
    frame = pd.read_csv(written["metric_curves_csv"])
    assert frame.loc[(frame["behavior"] == "click") & (frame["k"] == 5), "hr"].item() == 0.5
