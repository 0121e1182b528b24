"""
recrl is an offline reinforcement-learning framework for sequential recommendation.

A recommender is trained from logged sessions with a conservative expectile value function,
contrastive reward and state-transition heads over sampled negative actions, and value-weighted
policy extraction. Everything is differentiated by the small reverse-mode engine in autodiff.

Subpackages:
    autodiff    -> arrays, the gradient tape, differentiable operations and Adam.
    data        -> event parsing, filtering and splitting, MDP transitions, batch sampling.
    models      -> GRU / self-attention state encoders and the value and policy networks.
    learning    -> the training objective and the training loop.
    evaluation  -> full-catalog ranking metrics and run reports.

The command line entry point lives in recrl.cli.
"""

__version__ = "0.1.0"
