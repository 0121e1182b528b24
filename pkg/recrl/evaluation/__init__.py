"""
Evaluation.

metrics  -> ranks, HR@K, NDCG@K, MetricsReport and multi-seed aggregation.
evaluate -> full-catalog replay of a split.
report   -> comparison tables and learning curves across runs.
"""
