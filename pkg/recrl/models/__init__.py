"""
Networks.

encoders -> the GRU and self-attention state encoders G(s).
networks -> ValueNet, PolicyNet, MCRLNetworks and the "SRLC1" checkpoint format.
"""
