"""Actor-critic reinforcement learning with local guides."""

__version__ = "0.1.0"
