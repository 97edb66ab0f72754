"""Hindsight relabeling ("future" strategy) and minibatch assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ReplayBuffer


@dataclass
class RelabeledBatch:
    """Struct-of-arrays minibatch; row ``i`` is one relabeled sample.

    ``goal_index`` is the step whose achieved goal replaced the original goal,
    or -1 where the trajectory's own goal was kept.
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    goals: np.ndarray
    rewards: np.ndarray
    relabeled: np.ndarray
    trajectory_index: np.ndarray
    step_index: np.ndarray
    goal_index: np.ndarray

    def __len__(self):
        return len(self.rewards)


def sample_minibatch(buffer: ReplayBuffer, batch_size: int, her_prob: float, rng, reward_fn) -> RelabeledBatch:
    """Draw transitions uniformly and relabel a fraction ``her_prob`` of them.

    A relabeled sample at step ``t`` takes the achieved goal of a uniformly
    chosen later state ``s_k``, ``t < k <= H``; every reward is recomputed as
    ``reward_fn(achieved_next, goal)``.
    """
    if len(buffer) == 0:
        raise ValueError("cannot sample from an empty replay buffer")
    if not 0.0 <= her_prob <= 1.0:
        raise ValueError("her_prob must lie in [0, 1]")
    data = buffer.arrays()
    n_traj, horizon = data["rewards"].shape
    ep = rng.integers(0, n_traj, size=batch_size)
    t = rng.integers(0, horizon, size=batch_size)
    relabel = rng.uniform(size=batch_size) < her_prob
    # k uniform on {t+1, ..., H}
    future = t + 1 + (rng.uniform(size=batch_size) * (horizon - t)).astype(int)
    future = np.minimum(future, horizon)
    goals = data["goals"][ep].copy()
    goals[relabel] = data["achieved_goals"][ep[relabel], future[relabel]]
    achieved_next = data["achieved_goals"][ep, t + 1]
    rewards = np.asarray(reward_fn(achieved_next, goals), dtype=float)
    return RelabeledBatch(
        states=data["states"][ep, t],
        actions=data["actions"][ep, t],
        next_states=data["states"][ep, t + 1],
        goals=goals,
        rewards=rewards,
        relabeled=relabel,
        trajectory_index=ep,
        step_index=t,
        goal_index=np.where(relabel, future, -1),
    )
