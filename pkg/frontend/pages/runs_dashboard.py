"""
This module provides the streamlit UI to compare training runs.
"""
from pathlib import Path
from typing import List

import altair as alt
import pandas as pd
import streamlit as st

from recrl.cli import default_output_root
from recrl.evaluation.report import comparison_table, learning_curves, load_reports, metric_curves

title = "Runs Dashboard"


def _run_dirs(root: Path) -> List[Path]:
    """Directories below ``root`` holding a report or a step log."""
    if not root.is_dir():
        return []
    found = {
        path.parent
        for pattern in ("**/report_*.json", "**/step_log.jsonl")
        for path in root.glob(pattern)
    }
    return sorted(found)


def app() -> None:
    """This app renders the Runs Dashboard page"""
    # TEXT:
    st.write(
        """
             # Runs Dashboard

             Pick run directories to compare their ranking metrics and loss curves.
             """
    )

    # SIDEBAR (PARAMETERS):
    st.sidebar.title("Parameters")
    root = Path(st.sidebar.text_input(label="Output root", value=default_output_root()))
    split = st.sidebar.selectbox(label="Split", options=["test", "validation"])
    available = _run_dirs(root)
    if not available:
        st.warning(f"No runs found under {root}.")
        return
    labels = [str(path.relative_to(root)) for path in available]
    chosen = st.multiselect(label="Runs", options=labels, default=labels)
    run_dirs = [root / label for label in chosen]

    # OUTPUT:
    reports = load_reports(run_dirs, split=split)
    if reports:
        baseline = st.sidebar.selectbox(label="Baseline", options=["(none)"] + list(reports))
        table = comparison_table(reports, baseline=None if baseline == "(none)" else baseline)
        st.write("## Ranking metrics")
        st.dataframe(table.style.format("{:.4f}"))
    else:
        st.info(f"No {split} report among the chosen runs.")

    points = metric_curves(run_dirs, split=split).dropna(subset=["hr"])
    if not points.empty:
        st.write("## HR against training step")
        behavior = st.selectbox(label="Behavior", options=sorted(points["behavior"].unique()))
        k = st.selectbox(label="K", options=sorted(points["k"].unique()))
        chosen_points = points[(points["behavior"] == behavior) & (points["k"] == k)]
        st.altair_chart(
            alt.Chart(chosen_points)
            .mark_line(point=True)
            .encode(x="step:Q", y=alt.Y("hr:Q", title=f"HR@{k}"), color="run:N")
            .interactive(),
            use_container_width=True,
        )

    curves = learning_curves(run_dirs)
    if curves.empty:
        return
    st.write("## Learning curves")
    metric = st.selectbox(label="Loss", options=sorted(curves["metric"].unique()))
    selected: pd.DataFrame = curves[curves["metric"] == metric]
    chart = (
        alt.Chart(selected)
        .mark_line()
        .encode(x="step:Q", y=alt.Y("value:Q", title=metric), color="run:N")
        .interactive()
    )
    st.altair_chart(chart, use_container_width=True)
