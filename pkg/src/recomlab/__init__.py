"""Plasticity-loss laboratory: quadrotor hover env, PPO, and a retrospective-cost learning-rate scheduler."""

__version__ = "0.1.0"
