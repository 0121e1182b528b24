"""
Session logs in, MDP transitions out.

events    -> parsing of delimiter-separated event files.
dataset   -> filtering, splitting and transition building.
sampling  -> mini-batches and negative actions.
cache     -> the preprocessed "SRLF1" cache.
synthetic -> planted-structure logs for desk-scale experiments.
"""
