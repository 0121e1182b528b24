"""
Learning.

config  -> TrainConfig.
losses  -> value, reward, transition and policy-extraction losses.
trainer -> train_step, polyak_update and MCRLTrainer.
"""
