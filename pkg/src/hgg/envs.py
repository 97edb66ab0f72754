"""Deterministic 2-D desk environments with sparse goal-conditioned reward.

Three tasks share one kinematic model on the table square ``[-0.25, 0.25]^2``:

* ``desk-reach``: move the agent to a goal; the goal space is the agent position.
* ``desk-push``: push a point object to a goal by contact; the goal space is
  the object position.
* ``desk-push-wall``: as ``desk-push`` with a fixed wall the object cannot cross.

Dynamics are written for batches of states so rollouts and evaluation can be
vectorised; the single-instance ``reset``/``step`` API wraps them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import TaskInstance, Trajectory


class EpisodeFinishedError(RuntimeError):
    pass


class IllegalStateError(ValueError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    goal_dim: int
    action_dim: int
    horizon: int = 50
    success_threshold: float = 0.02
    action_bound: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.success_threshold > 0:
            raise ValueError("success threshold must be positive")
        if not self.action_bound > 0:
            raise ValueError("action bound must be positive")


@dataclass(frozen=True)
class TargetDistribution:
    """Independent uniform draws on an initial segment and a goal segment."""

    initial_segment: Tuple[Tuple[float, float], Tuple[float, float]]
    goal_segment: Tuple[Tuple[float, float], Tuple[float, float]]

    @staticmethod
    def _on_segment(segment, u):
        a, b = np.asarray(segment[0], float), np.asarray(segment[1], float)
        return a + np.asarray(u)[..., None] * (b - a)

    def sample(self, rng, size=None):
        u0 = rng.uniform(size=size)
        u1 = rng.uniform(size=size)
        return self._on_segment(self.initial_segment, u0), self._on_segment(self.goal_segment, u1)


def sparse_reward(achieved, goal, threshold):
    """0 where the achieved goal lies within ``threshold`` of the goal, else -1."""
    d = np.linalg.norm(np.asarray(achieved, float) - np.asarray(goal, float), axis=-1)
    return np.where(d <= threshold, 0.0, -1.0)


def _clip_through_box(p, q, lo, hi):
    """Stop each motion ``p -> q`` where it would enter the open box ``(lo, hi)``.

    Rows of ``p`` must lie outside the open box. Returns the blocked end points;
    the coordinate of the face that was hit is snapped onto the face exactly.
    """
    d = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (lo - p) / d
        t_hi = (hi - p) / d
    t_in = np.where(d > 0, t_lo, np.where(d < 0, t_hi, -np.inf))
    t_out = np.where(d > 0, t_hi, np.where(d < 0, t_lo, np.inf))
    # motion parallel to an axis only crosses if already strictly inside that slab
    inside_axis = (p > lo) & (p < hi)
    t_in = np.where((d == 0) & ~inside_axis, np.inf, t_in)
    enter = t_in.max(axis=1)
    leave = t_out.min(axis=1)
    hits = (enter < leave) & (enter < 1.0) & (leave > 0.0)
    if not np.any(hits):
        return q
    out = q.copy()
    axis = t_in.argmax(axis=1)
    te = np.clip(enter, 0.0, 1.0)
    rows = np.nonzero(hits)[0]
    out[rows] = p[rows] + te[rows, None] * d[rows]
    face = np.where(d > 0, lo, hi)
    out[rows, axis[rows]] = face[rows, axis[rows]]
    return out


class DeskEnv:
    """Base class: reach dynamics for the agent, goal = agent position."""

    name = "desk-reach"
    table_half_width = 0.25
    contact_radius = 0.03
    max_substep = 0.025
    agent_start = (0.0, 0.0)

    def __init__(
        self,
        horizon: int = 50,
        success_threshold: float = 0.02,
        target: Optional[TargetDistribution] = None,
        step_scale: float = 0.05,
    ):
        if not step_scale > 0:
            raise ValueError("step_scale must be positive")
        self.step_scale = float(step_scale)
        # contact is resolved on sub-steps no longer than max_substep so the
        # agent cannot tunnel through the object
        self.n_substeps = int(np.ceil(self.step_scale / self.max_substep - 1e-9))
        self.spec = self._make_spec(horizon, success_threshold)
        self.target = target if target is not None else self.default_target()
        self._state = None
        self._goal = None
        self._t = 0

    def _make_spec(self, horizon, success_threshold):
        return EnvSpec(2, 2, 2, horizon, success_threshold)

    @staticmethod
    def default_target():
        return TargetDistribution(((0.0, 0.0), (0.0, 0.0)), ((-0.15, 0.15), (0.15, 0.15)))

    # -- geometry -------------------------------------------------------
    @property
    def goal_space_diameter(self) -> float:
        return float(2 * self.table_half_width * np.sqrt(self.spec.goal_dim))

    @property
    def observation_dim(self) -> int:
        return self.observe(np.zeros(self.spec.state_dim)).shape[-1]

    def phi(self, states):
        return np.asarray(states, float)[..., 0:2]

    def observe(self, states):
        """Feature vector fed to the agent for each state."""
        return np.asarray(states, float)

    def initial_state(self, object_position):
        return np.asarray(object_position, float).copy()

    def is_legal(self, state) -> bool:
        s = np.asarray(state, float)
        if s.shape != (self.spec.state_dim,) or not np.all(np.isfinite(s)):
            return False
        return bool(np.all(np.abs(s) <= self.table_half_width))

    # -- dynamics -------------------------------------------------------
    def _move_agent(self, agent, actions, fraction=1.0):
        b = self.spec.action_bound
        a = np.clip(actions, -b, b)
        w = self.table_half_width
        return np.clip(agent + a * (fraction * self.step_scale / b), -w, w)

    def dynamics(self, states, actions):
        states = np.atleast_2d(np.asarray(states, float))
        actions = np.atleast_2d(np.asarray(actions, float))
        return self._move_agent(states, actions)

    def compute_reward(self, achieved, goals):
        return sparse_reward(achieved, goals, self.spec.success_threshold)

    def reward(self, next_state, goal):
        return float(self.compute_reward(self.phi(next_state), goal))

    # -- episode API ----------------------------------------------------
    def sample_target_task(self, rng) -> TaskInstance:
        init, goal = self.target.sample(rng)
        return TaskInstance(self.initial_state(init), goal)

    def sample_target_tasks(self, rng, n):
        return [self.sample_target_task(rng) for _ in range(n)]

    def reset(self, task: TaskInstance):
        if task.goal.shape != (self.spec.goal_dim,):
            raise ValueError("goal dimension does not match the environment")
        if not self.is_legal(task.initial_state):
            raise IllegalStateError(f"illegal initial state {task.initial_state}")
        self._state = task.initial_state.copy()
        self._goal = task.goal.copy()
        self._t = 0
        return self._state.copy()

    def step(self, action):
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        if self._t >= self.spec.horizon:
            raise EpisodeFinishedError("episode already reached its horizon")
        action = np.asarray(action, float)
        if action.shape != (self.spec.action_dim,):
            raise ValueError("action dimension does not match the environment")
        nxt = self.dynamics(self._state[None], action[None])[0]
        achieved = self.phi(nxt)
        r = float(self.compute_reward(achieved, self._goal))
        self._state = nxt
        self._t += 1
        return nxt.copy(), r, achieved

    def is_success(self, traj: Trajectory) -> bool:
        if traj.horizon != self.spec.horizon:
            raise ValueError("trajectory is incomplete")
        final = self.phi(traj.states[-1])
        return bool(np.linalg.norm(final - traj.task.goal) <= self.spec.success_threshold)

    def rollout_batch(self, initial_states, goals, policy):
        """Roll ``policy(states, goals) -> actions`` for a full horizon in parallel.

        Returns the ``(n, H + 1, state_dim)`` state array.
        """
        states = np.array(initial_states, dtype=float)
        path = [states]
        for _ in range(self.spec.horizon):
            states = self.dynamics(states, policy(states, goals))
            path.append(states)
        return np.stack(path, axis=1)


class DeskReach(DeskEnv):
    pass


class DeskPush(DeskEnv):
    """Agent pushes a point object; state is ``(agent_x, agent_y, obj_x, obj_y)``."""

    name = "desk-push"

    def _make_spec(self, horizon, success_threshold):
        return EnvSpec(4, 2, 2, horizon, success_threshold)

    @staticmethod
    def default_target():
        return TargetDistribution(((-0.15, -0.15), (0.15, -0.15)), ((-0.15, 0.15), (0.15, 0.15)))

    def phi(self, states):
        return np.asarray(states, float)[..., 2:4]

    def observe(self, states):
        s = np.asarray(states, float)
        return np.concatenate([s, s[..., 2:4] - s[..., 0:2]], axis=-1)

    def initial_state(self, object_position):
        return np.concatenate([np.asarray(self.agent_start, float), np.asarray(object_position, float)])

    def _block_object(self, old, new):
        return new

    def dynamics(self, states, actions):
        states = np.atleast_2d(np.asarray(states, float))
        actions = np.atleast_2d(np.asarray(actions, float))
        for _ in range(self.n_substeps):
            states = self._substep(states, actions)
        return states

    def _substep(self, states, actions):
        agent_old = states[:, 0:2]
        obj = states[:, 2:4]
        agent = self._move_agent(agent_old, actions, 1.0 / self.n_substeps)
        offset = obj - agent
        dist = np.linalg.norm(offset, axis=1)
        touching = dist < self.contact_radius
        if np.any(touching):
            direction = np.zeros_like(offset)
            nz = dist > 0
            direction[nz] = offset[nz] / dist[nz, None]
            # agent exactly on the object: push along the agent's motion, else +x
            motion = agent - agent_old
            mnorm = np.linalg.norm(motion, axis=1)
            fallback = np.where(mnorm[:, None] > 0, motion / np.where(mnorm > 0, mnorm, 1.0)[:, None], [1.0, 0.0])
            direction = np.where(nz[:, None], direction, fallback)
            pushed = agent + self.contact_radius * direction
            w = self.table_half_width
            pushed = np.clip(pushed, -w, w)
            new_obj = np.where(touching[:, None], pushed, obj)
            new_obj = self._block_object(obj, new_obj)
        else:
            new_obj = obj
        return np.concatenate([agent, new_obj], axis=1)


class DeskPushWall(DeskPush):
    """Push task with a wall from ``(-0.3, 0)`` to ``(0, 0)`` the object cannot cross.

    The wall is a box of half thickness ``wall_half_thickness`` around that
    segment. The object is a point standing in for a block of half size
    ``object_radius``, so its centre is kept out of the wall box grown by that
    margin; it stops on the face it runs into. The agent is not blocked.
    """

    name = "desk-push-wall"
    wall_start = (-0.3, 0.0)
    wall_end = (0.0, 0.0)
    wall_half_thickness = 0.01
    object_radius = 0.025

    @staticmethod
    def default_target():
        return TargetDistribution(((-0.15, -0.15), (-0.045, -0.15)), ((-0.15, 0.15), (-0.045, 0.15)))

    @property
    def wall_box(self):
        """Region the object centre may not enter: the wall grown by the object size."""
        m = self.object_radius
        t = self.wall_half_thickness + m
        lo = np.array([min(self.wall_start[0], self.wall_end[0]) - m, self.wall_start[1] - t])
        hi = np.array([max(self.wall_start[0], self.wall_end[0]) + m, self.wall_start[1] + t])
        return lo, hi

    def in_wall(self, points):
        lo, hi = self.wall_box
        p = np.asarray(points, float)
        return np.all((p > lo) & (p < hi), axis=-1)

    def is_legal(self, state) -> bool:
        return super().is_legal(state) and not bool(self.in_wall(self.phi(state)))

    def _block_object(self, old, new):
        lo, hi = self.wall_box
        return _clip_through_box(old, new, lo, hi)


ENVIRONMENTS = {
    "desk-reach": DeskReach,
    "desk-push": DeskPush,
    "desk-push-wall": DeskPushWall,
}


def make_env(name: str, **kwargs) -> DeskEnv:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(**kwargs)


def default_polyline(env: DeskEnv):
    """Waypoints of the crafted route for ``env`` (around the wall), or None."""
    if isinstance(env, DeskPushWall):
        return np.array([[-0.15, -0.15], [0.06, -0.15], [0.06, 0.15], [-0.15, 0.15]])
    return None
