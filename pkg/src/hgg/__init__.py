"""Hindsight goal generation for goal-conditioned reinforcement learning."""

from .estimator import HindsightGoalGeneration, HindsightGoalSampler

__all__ = ["HindsightGoalGeneration", "HindsightGoalSampler"]
__version__ = "0.1.0"
