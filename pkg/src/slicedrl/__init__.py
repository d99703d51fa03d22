"""Deep Q-learning for network-slicing resource management: simulators, agent, baselines."""

__version__ = "0.1.0"
