"""Minimum-time bicopter flip trajectories and tracking controllers."""

__version__ = "0.1.0"
