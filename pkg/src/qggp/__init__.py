"""Tabular Q-learning players for small general-game-playing board games."""

__version__ = "0.1.0"
