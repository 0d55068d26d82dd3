"""PAC reinforcement learning on discounted tabular MDPs with multi-stage optimistic Q-learning."""

__version__ = "0.1.0"
