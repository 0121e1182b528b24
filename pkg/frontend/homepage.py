"""
Entry point of the runs dashboard: ``streamlit run frontend/homepage.py``.
"""
import streamlit as st

from frontend.pages import runs_dashboard
from multipage import MultiPage

if __name__ == "__main__":
    app = MultiPage()
    st.set_page_config(
        page_title="Offline RL Recommender",
        layout="wide",
        page_icon="🛒",
        initial_sidebar_state="collapsed",
    )
    st.title("Homepage")

    app.add_page(runs_dashboard.title, runs_dashboard.app)

    app.run()
