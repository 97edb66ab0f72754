"""Hindsight goal selection by value-biased bipartite matching.

Each sampled target task is matched to a distinct trajectory from the recent
pool. The edge cost between target ``(s0_hat, g_hat)`` and trajectory ``tau``
with initial state ``s0`` is

    c * |phi(s0_hat) - phi(s0)| + min_t ( dist(g_hat, phi(s_t)) - V(s0, phi(s_t)) / L* )

and the achieved state at the minimising step becomes the exploration goal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import TaskInstance, Trajectory
from .flow import InfeasibleMatchingError, mcmf_assign
from .metric import EUCLIDEAN, MetricConfig, goal_distance_matrix


@dataclass(frozen=True)
class MatchingConfig:
    L: float = 5.0
    c: float = 3.0
    K: int = 50
    gamma: float = 0.98
    goal_noise_sigma: float = 0.05
    goal_metric: str = EUCLIDEAN
    polyline: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("Lipschitz constant L must be positive (use inf to drop the value term)")
        if not self.c > 0:
            raise ValueError("distance weight c must be positive")
        if int(self.K) < 1:
            raise ValueError("K must be a positive integer")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.goal_noise_sigma < 0:
            raise ValueError("goal noise must be nonnegative")

    def metric(self, phi=None) -> MetricConfig:
        kw = {} if phi is None else {"phi": phi}
        return MetricConfig(c=self.c, goal_metric=self.goal_metric, polyline=self.polyline, **kw)


@dataclass
class Assignment:
    pairs: List[Tuple[int, int, int]]  # (target index, trajectory index, best step)


@dataclass
class GoalMatching:
    assignment: Assignment
    goals: np.ndarray  # (K, goal_dim), before noise
    pair_costs: np.ndarray  # (K,)
    cost: np.ndarray  # full (K, N) cost matrix

    @property
    def total_cost(self) -> float:
        return float(self.pair_costs.sum())

    @property
    def trajectory_indices(self) -> np.ndarray:
        return np.array([j for _, j, _ in self.assignment.pairs])


def normalize_lipschitz(L: float, gamma: float, d_max: float) -> float:
    """Scale ``L`` by the value range ``1 / (1 - gamma)`` and the goal-space diameter."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not d_max > 0:
        raise ValueError("goal-space diameter must be positive")
    if L < 0:
        raise ValueError("L must be nonnegative")
    return L / ((1.0 - gamma) * d_max)


def _identity(x):
    return np.asarray(x, float)


def _score_tensor(targets, trajectories, value_fn, cfg: MatchingConfig, phi, l_star):
    """Per-step costs ``(K, N, H+1)`` and the initial-state term ``(K, N)``."""
    t_init = np.stack([phi(t.initial_state) for t in targets])
    t_goal = np.stack([t.goal for t in targets])
    s0 = np.stack([tr.states[0] for tr in trajectories])
    achieved = np.stack([tr.achieved_goals for tr in trajectories])  # (N, T, G)
    n, steps = achieved.shape[:2]

    init_term = cfg.c * np.linalg.norm(t_init[:, None] - phi(s0)[None], axis=-1)
    goal_term = goal_distance_matrix(achieved, t_goal, cfg.metric(phi))
    if value_fn is None or np.isinf(l_star):
        return goal_term, init_term
    rep_s0 = np.repeat(s0, steps, axis=0)
    values = np.asarray(value_fn(rep_s0, achieved.reshape(n * steps, -1)), float).reshape(n, steps)
    return goal_term - values[None] / l_star, init_term


def trajectory_score(target: TaskInstance, traj: Trajectory, value_fn, cfg: MatchingConfig, *, l_star, phi=_identity):
    """Edge cost of pairing ``target`` with ``traj`` and the minimising step."""
    per_step, init = _score_tensor([target], [traj], value_fn, cfg, phi, l_star)
    best = int(np.argmin(per_step[0, 0]))
    return float(init[0, 0] + per_step[0, 0, best]), best


def cost_matrix(targets, trajectories, value_fn, cfg: MatchingConfig, *, l_star, phi=_identity):
    """Return ``(cost (K, N), best_step (K, N))``."""
    per_step, init = _score_tensor(targets, trajectories, value_fn, cfg, phi, l_star)
    best = np.argmin(per_step, axis=2)
    inner = np.take_along_axis(per_step, best[..., None], axis=2)[..., 0]
    return init + inner, best


def match_hindsight_goals(
    targets: Sequence[TaskInstance],
    pool: Sequence[Trajectory],
    value_fn: Optional[Callable],
    cfg: MatchingConfig,
    *,
    d_max: float,
    phi=_identity,
) -> GoalMatching:
    if len(pool) < len(targets):
        raise InfeasibleMatchingError(
            f"pool holds {len(pool)} trajectories but {len(targets)} distinct ones are needed; "
            "warm up the buffer with target-task rollouts first"
        )
    l_star = normalize_lipschitz(cfg.L, cfg.gamma, d_max)
    cost, best = cost_matrix(targets, pool, value_fn, cfg, l_star=l_star, phi=phi)
    cols = mcmf_assign(cost)
    rows = np.arange(len(targets))
    steps = best[rows, cols]
    goals = np.stack([pool[j].achieved_goals[t] for j, t in zip(cols, steps)])
    pairs = [(int(i), int(j), int(t)) for i, j, t in zip(rows, cols, steps)]
    return GoalMatching(Assignment(pairs), goals, cost[rows, cols], cost)


def select_hindsight_goals(
    targets: Sequence[TaskInstance],
    pool: Sequence[Trajectory],
    value_fn: Optional[Callable],
    cfg: MatchingConfig,
    rng,
    *,
    d_max: float,
    phi=_identity,
    goal_bounds=None,
    return_matching: bool = False,
):
    """Exploration tasks ``(s0_hat, phi(s_t*) + noise)``, one per target.

    ``goal_bounds`` optionally clips the perturbed goals to a box ``(lo, hi)``.
    """
    matching = match_hindsight_goals(targets, pool, value_fn, cfg, d_max=d_max, phi=phi)
    goals = matching.goals
    if cfg.goal_noise_sigma > 0:
        goals = goals + rng.normal(0.0, cfg.goal_noise_sigma, size=goals.shape)
    if goal_bounds is not None:
        goals = np.clip(goals, goal_bounds[0], goal_bounds[1])
    tasks = [TaskInstance(t.initial_state, g) for t, g in zip(targets, goals)]
    if return_matching:
        return tasks, matching
    return tasks
