"""Multi-game visual representation pre-training for RL."""

__version__ = "0.1.0"
