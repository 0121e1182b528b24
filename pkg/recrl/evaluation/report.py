"""
Comparison tables and learning curves across runs.

A run directory holds ``report_<split>.json`` (or ``report_<split>_mean.json`` for a multi-seed
experiment) and, for trained runs, ``step_log.jsonl``. Evaluated intermediate checkpoints leave
``checkpoints/report_<split>_step_<n>.json`` next to the checkpoint; these give metric-vs-step curves.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  pylint: disable=wrong-import-position
import pandas as pd  # noqa: E402  pylint: disable=wrong-import-position

from recrl.evaluation.metrics import MetricsReport  # noqa: E402  pylint: disable=wrong-import-position
from recrl.learning.trainer import (  # noqa: E402  pylint: disable=wrong-import-position
    CHECKPOINT_DIR,
    FINAL_CHECKPOINT,
    STEP_LOG,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
LOSS_COLUMNS = ("value_loss", "policy_loss", "reward_loss", "transition_loss", "combined")
METRIC_CURVE_COLUMNS = ("run", "step", "behavior", "k", "hr", "ndcg")


def run_name(run_dir: PathLike) -> str:
    """Directory name, prefixed by the experiment name for per-seed directories."""
    path = Path(run_dir)
    if path.name.startswith("seed_") and path.parent.name:
        return f"{path.parent.name}/{path.name}"
    return path.name


def report_stem(checkpoint: PathLike, split: str = "test") -> str:
    """``report_<split>`` for a final model, ``report_<split>_<checkpoint stem>`` otherwise."""
    path = Path(checkpoint)
    if path.name == FINAL_CHECKPOINT:
        return f"report_{split}"
    return f"report_{split}_{path.stem}"


def report_path(run_dir: PathLike, split: str = "test") -> Optional[Path]:
    for name in (f"report_{split}.json", f"report_{split}_mean.json"):
        candidate = Path(run_dir) / name
        if candidate.exists():
            return candidate
    return None


def load_reports(run_dirs: Sequence[PathLike], split: str = "test") -> Dict[str, MetricsReport]:
    """Reports of the given runs; missing or unreadable reports are skipped with a warning."""
    reports: Dict[str, MetricsReport] = {}
    for run_dir in run_dirs:
        path = report_path(run_dir, split)
        if path is None:
            logger.warning("No %s report in %s; run skipped.", split, run_dir)
            continue
        try:
            reports[run_name(run_dir)] = MetricsReport.load(path)
        except (ValueError, KeyError, TypeError) as err:
            logger.warning("Corrupted report %s (%s); run skipped.", path, err)
    return reports


def comparison_table(
    reports: Dict[str, MetricsReport], baseline: Optional[str] = None
) -> pd.DataFrame:
    """Rows are runs, columns "hr@K/behavior", "ndcg@K/behavior" and "reward@K".

    With a baseline, a "Δ <column>" column holds each run's difference to the baseline row.
    """
    rows = {}
    for name, report in reports.items():
        row: Dict[str, Optional[float]] = {}
        for metric in ("hr", "ndcg"):
            for behavior, values in getattr(report, metric).items():
                for k in report.ks:
                    row[f"{metric}@{k}/{behavior}"] = values[k]
        for k in report.ks:
            row[f"reward@{k}"] = report.cumulative_reward[k]
        rows[name] = row
    table = pd.DataFrame.from_dict(rows, orient="index").astype(float)
    table.index.name = "run"
    if baseline is not None:
        if baseline not in table.index:
            raise ValueError(f"Baseline run {baseline!r} is not among {list(table.index)}.")
        deltas = table - table.loc[baseline]
        deltas.columns = [f"Δ {column}" for column in table.columns]
        table = pd.concat([table, deltas], axis=1)
    return table


def learning_curves(run_dirs: Sequence[PathLike]) -> pd.DataFrame:
    """Step logs of all runs in long format: run, step, metric, value."""
    frames: List[pd.DataFrame] = []
    for run_dir in run_dirs:
        path = Path(run_dir) / STEP_LOG
        if not path.exists():
            continue
        try:
            records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
        except json.JSONDecodeError as err:
            logger.warning("Unreadable step log %s (%s); curves skipped.", path, err)
            continue
        frame = pd.DataFrame.from_records(records)
        columns = [c for c in LOSS_COLUMNS if c in frame.columns]
        long = frame.melt(id_vars=["step"], value_vars=columns, var_name="metric")
        long.insert(0, "run", run_name(run_dir))
        frames.append(long.dropna(subset=["value"]))
    if not frames:
        return pd.DataFrame(columns=["run", "step", "metric", "value"])
    return pd.concat(frames, ignore_index=True)


def plot_learning_curves(curves: pd.DataFrame, path: PathLike) -> None:
    """One panel per loss component, one line per run."""
    metrics = [m for m in LOSS_COLUMNS if m in set(curves["metric"])]
    if not metrics:
        logger.warning("No learning curves to plot.")
        return
    fig, axes = plt.subplots(len(metrics), 1, figsize=(8, 2.5 * len(metrics)), sharex=True)
    axes = [axes] if len(metrics) == 1 else list(axes)
    for ax, metric in zip(axes, metrics):
        for run, group in curves[curves["metric"] == metric].groupby("run"):
            ax.plot(group["step"], group["value"], label=run, linewidth=0.8)
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize="small")
    axes[-1].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _step_reports(run_dir: Path, split: str) -> List[MetricsReport]:
    paths = sorted((run_dir / CHECKPOINT_DIR).glob(f"report_{split}_step_*.json"))
    final = run_dir / f"report_{split}.json"
    if final.exists():
        paths.append(final)
    reports = []
    for path in paths:
        try:
            report = MetricsReport.load(path)
        except (ValueError, KeyError, TypeError) as err:
            logger.warning("Corrupted report %s (%s); point skipped.", path, err)
            continue
        if report.step is not None:
            reports.append(report)
    return reports


def metric_curves(run_dirs: Sequence[PathLike], split: str = "test") -> pd.DataFrame:
    """HR and NDCG of every evaluated checkpoint: run, step, behavior, k, hr, ndcg."""
    rows = []
    for run_dir in run_dirs:
        name = run_name(run_dir)
        by_step = {r.step: r for r in _step_reports(Path(run_dir), split)}
        for step in sorted(by_step):
            report = by_step[step]
            for behavior in report.hr:
                for k in report.ks:
                    rows.append(
                        {
                            "run": name,
                            "step": step,
                            "behavior": behavior,
                            "k": k,
                            "hr": report.hr[behavior][k],
                            "ndcg": report.ndcg[behavior][k],
                        }
                    )
    return pd.DataFrame(rows, columns=list(METRIC_CURVE_COLUMNS))


def plot_metric_curves(curves: pd.DataFrame, path: PathLike) -> None:
    """HR@K against step, one panel per behavior, one line per run and K."""
    curves = curves.dropna(subset=["hr"])
    behaviors = sorted(set(curves["behavior"]))
    if not behaviors:
        logger.warning("No metric curves to plot.")
        return
    fig, axes = plt.subplots(len(behaviors), 1, figsize=(8, 2.5 * len(behaviors)), sharex=True)
    axes = [axes] if len(behaviors) == 1 else list(axes)
    for ax, behavior in zip(axes, behaviors):
        for (run, k), group in curves[curves["behavior"] == behavior].groupby(["run", "k"]):
            ax.plot(group["step"], group["hr"], marker=".", label=f"{run} @{k}", linewidth=0.8)
        ax.set_ylabel(f"HR/{behavior}")
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize="small")
    axes[-1].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(
    run_dirs: Sequence[PathLike],
    out_dir: PathLike,
    split: str = "test",
    baseline: Optional[str] = None,
) -> Dict[str, Path]:
    """Write the comparison table, the loss curves and the metric curves to ``out_dir``.

    Files: comparison.txt, comparison.csv, curves.csv, curves.png, metric_curves.csv and, when
    intermediate checkpoints were evaluated, metric_curves.png.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = load_reports(run_dirs, split)
    if not reports:
        raise FileNotFoundError(f"None of the {len(run_dirs)} run(s) holds a {split} report.")
    table = comparison_table(reports, baseline=baseline)
    written = {
        "comparison_txt": out / "comparison.txt",
        "comparison_csv": out / "comparison.csv",
        "curves_csv": out / "curves.csv",
    }
    written["comparison_txt"].write_text(
        table.to_string(float_format=lambda v: f"{v:.4f}") + "\n", encoding="utf-8"
    )
    table.to_csv(written["comparison_csv"])
    curves = learning_curves(run_dirs)
    curves.to_csv(written["curves_csv"], index=False)
    if not curves.empty:
        written["curves_png"] = out / "curves.png"
        plot_learning_curves(curves, written["curves_png"])
    written["metric_curves_csv"] = out / "metric_curves.csv"
    points = metric_curves(run_dirs, split)
    points.to_csv(written["metric_curves_csv"], index=False)
    if not points.empty:
        written["metric_curves_png"] = out / "metric_curves.png"
        plot_metric_curves(points, written["metric_curves_png"])
    logger.info("Report of %d run(s) written to %s.", len(reports), out)
    return written
