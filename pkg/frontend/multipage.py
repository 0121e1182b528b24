"""
Navigation shell combining several streamlit pages into one app.
"""
from typing import Callable, Dict, List

import streamlit as st

Page = Dict[str, object]


class MultiPage:
    """Pages registered by title, picked from a selectbox."""

    def __init__(self) -> None:
        self.pages: List[Page] = []

    def add_page(self, title: str, render: Callable[[], None]) -> None:
        """Register ``render`` under ``title``."""
        self.pages.append({"title": title, "function": render})

    def run(self) -> None:
        if not self.pages:
            st.info("No page registered.")
            return
        page = st.selectbox("App Navigation", self.pages, format_func=lambda page: page["title"])
        page["function"]()  # type: ignore[operator]
