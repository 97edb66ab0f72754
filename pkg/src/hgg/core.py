"""Shared domain types: tasks, transitions, trajectories and the replay buffer."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np


@dataclass(frozen=True)
class TaskInstance:
    """An initial system state paired with a desired goal."""

    initial_state: np.ndarray
    goal: np.ndarray

    def __post_init__(self):
        s = np.array(self.initial_state, dtype=float).reshape(-1)
        g = np.array(self.goal, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
            raise ValueError("task coordinates must be finite")
        s.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "initial_state", s)
        object.__setattr__(self, "goal", g)

    def __eq__(self, other):
        if not isinstance(other, TaskInstance):
            return NotImplemented
        return np.array_equal(self.initial_state, other.initial_state) and np.array_equal(
            self.goal, other.goal
        )

    __hash__ = None


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    achieved_goal: np.ndarray


class Trajectory:
    """A fixed-horizon rollout stored as stacked arrays.

    ``states`` and ``achieved_goals`` hold ``H + 1`` rows (including the
    initial state); ``actions`` and ``rewards`` hold ``H`` rows. Row ``t + 1``
    of ``achieved_goals`` is the achieved goal cached on transition ``t``.
    """

    __slots__ = ("task", "states", "actions", "rewards", "achieved_goals")

    def __init__(self, task, states, actions, rewards, achieved_goals):
        self.task = task
        self.states = np.asarray(states, dtype=float)
        self.actions = np.asarray(actions, dtype=float)
        self.rewards = np.asarray(rewards, dtype=float)
        self.achieved_goals = np.asarray(achieved_goals, dtype=float)
        horizon = len(self.actions)
        if horizon < 1:
            raise ValueError("trajectory must contain at least one transition")
        if len(self.states) != horizon + 1 or len(self.achieved_goals) != horizon + 1:
            raise ValueError("states and achieved goals need horizon + 1 rows")
        if len(self.rewards) != horizon:
            raise ValueError("rewards need one entry per transition")

    @classmethod
    def from_transitions(cls, task: TaskInstance, transitions: Sequence[Transition], phi=None):
        """Stack a transition list, rejecting rollouts whose states do not chain."""
        if len(transitions) == 0:
            raise ValueError("trajectory must contain at least one transition")
        for t in range(len(transitions) - 1):
            if not np.array_equal(transitions[t].next_state, transitions[t + 1].state):
                raise ValueError(f"transitions {t} and {t + 1} do not chain")
        states = [transitions[0].state] + [tr.next_state for tr in transitions]
        first_ag = phi(transitions[0].state) if phi is not None else transitions[0].achieved_goal
        achieved = [first_ag] + [tr.achieved_goal for tr in transitions]
        return cls(
            task,
            np.stack(states),
            np.stack([tr.action for tr in transitions]),
            np.array([tr.reward for tr in transitions], dtype=float),
            np.stack(achieved),
        )

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def __len__(self):
        return self.horizon

    @property
    def transitions(self) -> List[Transition]:
        return [
            Transition(
                self.states[t],
                self.actions[t],
                float(self.rewards[t]),
                self.states[t + 1],
                self.achieved_goals[t + 1],
            )
            for t in range(self.horizon)
        ]

    def validate(self):
        if not np.array_equal(self.states[0], self.task.initial_state):
            raise ValueError("trajectory does not start at its task's initial state")
        if not np.all((self.rewards == 0.0) | (self.rewards == -1.0)):
            raise ValueError("rewards must be exactly 0 or -1")
        for name in ("states", "actions", "achieved_goals"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")


class ReplayBuffer:
    """Bounded FIFO store of whole trajectories.

    Alongside the trajectory objects the buffer keeps ring-ordered arrays so
    hindsight minibatches can be drawn without Python-level loops.
    """

    def __init__(self, capacity: int = 10_000):
        if int(capacity) < 1:
            raise ValueError("capacity must be a positive integer")
        self.capacity = int(capacity)
        self._trajectories: deque = deque(maxlen=self.capacity)
        self._arrays = None
        self._head = 0  # next ring slot to write
        self.n_pushed = 0

    def __len__(self):
        return len(self._trajectories)

    def __iter__(self):
        return iter(self._trajectories)

    @property
    def trajectories(self) -> List[Trajectory]:
        return list(self._trajectories)

    def _allocate(self, traj: Trajectory):
        h = traj.horizon
        self._arrays = {
            "states": np.zeros((self.capacity, h + 1, traj.states.shape[1])),
            "actions": np.zeros((self.capacity, h, traj.actions.shape[1])),
            "rewards": np.zeros((self.capacity, h)),
            "achieved_goals": np.zeros((self.capacity, h + 1, traj.achieved_goals.shape[1])),
            "goals": np.zeros((self.capacity, traj.task.goal.shape[0])),
        }

    def push(self, traj: Trajectory):
        traj.validate()
        if self._arrays is None:
            self._allocate(traj)
        elif traj.horizon != self._arrays["actions"].shape[1]:
            raise ValueError("all stored trajectories must share one horizon")
        slot = self._head
        self._arrays["states"][slot] = traj.states
        self._arrays["actions"][slot] = traj.actions
        self._arrays["rewards"][slot] = traj.rewards
        self._arrays["achieved_goals"][slot] = traj.achieved_goals
        self._arrays["goals"][slot] = traj.task.goal
        self._head = (slot + 1) % self.capacity
        self._trajectories.append(traj)
        self.n_pushed += 1

    def arrays(self):
        """Return the stored arrays restricted to occupied slots (ring order)."""
        if self._arrays is None:
            raise ValueError("replay buffer is empty")
        n = len(self)
        return {k: v[:n] for k, v in self._arrays.items()}

    def matching_pool(self, pool_size: int = 1000) -> List[Trajectory]:
        if int(pool_size) < 1:
            raise ValueError("pool_size must be >= 1")
        n = min(int(pool_size), len(self))
        if n == 0:
            return []
        return list(self._trajectories)[-n:]


def push_trajectory(buffer: ReplayBuffer, traj: Trajectory) -> None:
    buffer.push(traj)


def matching_pool(buffer: ReplayBuffer, pool_size: int = 1000) -> List[Trajectory]:
    return buffer.matching_pool(pool_size)


def stack_tasks(tasks: Iterable[TaskInstance]):
    """Return ``(initial_states, goals)`` as two 2-D arrays."""
    tasks = list(tasks)
    return (
        np.stack([t.initial_state for t in tasks]),
        np.stack([t.goal for t in tasks]),
    )
