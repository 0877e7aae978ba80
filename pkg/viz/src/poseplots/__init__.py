"""Render exported pose-landscape grids, trajectories, and score fields."""

__version__ = "0.1.0"
