"""scikit-learn style wrappers around the training loop and the goal sampler."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import TaskInstance, Trajectory
from .matching import MatchingConfig, select_hindsight_goals
from .metric import EUCLIDEAN
from .training import RunConfig, TrainingState, evaluate, run_iteration


class HindsightGoalGeneration(BaseEstimator):
    """Goal-conditioned agent trained with hindsight goal generation.

    ``fit`` runs ``iterations`` rounds of (goal selection, K exploration
    episodes, replay updates) on the named desk environment; ``mode="her"``
    explores on the target tasks directly. There is no supervised data: ``X``
    and ``y`` are accepted and ignored by ``fit``.

    ``predict`` maps rows ``[state, goal]`` to actions and ``score`` returns
    the greedy success rate on fresh target tasks.
    """

    def __init__(
        self,
        env="desk-push",
        mode="hgg",
        iterations=100,
        K=50,
        L=5.0,
        c=3.0,
        gamma=0.98,
        goal_noise=0.05,
        goal_metric=EUCLIDEAN,
        pool_size=1000,
        buffer_size=10_000,
        batches_per_episode=20,
        batch_size=256,
        her_prob=0.8,
        hidden=(64, 64),
        dtype="float32",
        eval_episodes=50,
        random_state=0,
    ):
        self.env = env
        self.mode = mode
        self.iterations = iterations
        self.K = K
        self.L = L
        self.c = c
        self.gamma = gamma
        self.goal_noise = goal_noise
        self.goal_metric = goal_metric
        self.pool_size = pool_size
        self.buffer_size = buffer_size
        self.batches_per_episode = batches_per_episode
        self.batch_size = batch_size
        self.her_prob = her_prob
        self.hidden = hidden
        self.dtype = dtype
        self.eval_episodes = eval_episodes
        self.random_state = random_state

    def _run_config(self) -> RunConfig:
        params = self.get_params()
        seed = params.pop("random_state")
        return RunConfig(seed=0 if seed is None else int(seed), **params)

    def _start(self):
        self.config_ = self._run_config()
        self.state_ = TrainingState(self.config_)
        self.history_ = []

    def fit(self, X=None, y=None, callback=None):
        self._start()
        for _ in range(self.config_.iterations):
            self._step(callback)
        return self

    def partial_fit(self, X=None, y=None, callback=None):
        """Run one more iteration, starting a fresh run on the first call."""
        if not hasattr(self, "state_"):
            self._start()
        self._step(callback)
        return self

    def _step(self, callback):
        report = run_iteration(self.state_)
        self.history_.append(report)
        if callback is not None:
            callback(self.state_, report)

    @property
    def agent_(self):
        check_is_fitted(self, "state_")
        return self.state_.agent

    @property
    def env_(self):
        check_is_fitted(self, "state_")
        return self.state_.env

    def _split(self, X):
        env = self.env_
        X = check_array(X, dtype=np.float64)
        width = env.spec.state_dim + env.spec.goal_dim
        if X.shape[1] != width:
            raise ValueError(f"expected rows [state, goal] of width {width}, got {X.shape[1]}")
        return X[:, : env.spec.state_dim], X[:, env.spec.state_dim :]

    def predict(self, X):
        """Greedy actions for rows ``[state, goal]``."""
        states, goals = self._split(X)
        return self.agent_.policy(self.env_.observe(states), goals)

    def value(self, X):
        """Clipped value estimates ``V(s, g)`` for rows ``[state, goal]``."""
        states, goals = self._split(X)
        return self.state_.value_fn(states, goals)

    def score(self, X=None, y=None, n_episodes=None, random_state=None):
        """Greedy success rate on freshly sampled target tasks."""
        check_is_fitted(self, "state_")
        n = n_episodes or max(self.eval_episodes, 1)
        return evaluate(self.agent_, self.env_, n, np.random.default_rng(random_state))

    @property
    def learning_curve_(self):
        check_is_fitted(self, "history_")
        return np.array([(r.episodes, r.success_rate) for r in self.history_])


def _as_tasks(targets, state_dim):
    if isinstance(targets, (list, tuple)) and targets and isinstance(targets[0], TaskInstance):
        return list(targets)
    arr = check_array(targets, dtype=np.float64)
    if arr.shape[1] <= state_dim:
        raise ValueError(f"target rows must be [initial_state, goal] with state width {state_dim}")
    return [TaskInstance(row[:state_dim], row[state_dim:]) for row in arr]


class HindsightGoalSampler(TransformerMixin, BaseEstimator):
    """Maps target tasks to hindsight exploration tasks drawn from a trajectory pool.

    ``fit`` stores the pool (and optionally a value function
    ``value_fn(states, goals) -> values``); ``transform`` solves the
    diversity-constrained matching for a batch of targets given as rows
    ``[initial_state, goal]`` and returns rows of the same layout.
    """

    def __init__(
        self,
        L=5.0,
        c=3.0,
        gamma=0.98,
        goal_noise=0.05,
        goal_metric=EUCLIDEAN,
        polyline=None,
        d_max=None,
        random_state=None,
    ):
        self.L = L
        self.c = c
        self.gamma = gamma
        self.goal_noise = goal_noise
        self.goal_metric = goal_metric
        self.polyline = polyline
        self.d_max = d_max
        self.random_state = random_state

    def fit(self, X: Sequence[Trajectory], y=None, value_fn=None, phi=None):
        pool = list(X)
        if not pool:
            raise ValueError("the trajectory pool is empty")
        if not all(isinstance(t, Trajectory) for t in pool):
            raise TypeError("fit expects a sequence of Trajectory objects")
        self.pool_ = pool
        self.value_fn_ = value_fn
        self.phi_ = phi
        self.state_dim_ = pool[0].states.shape[1]
        if self.d_max is None:
            achieved = np.concatenate([t.achieved_goals for t in pool])
            span = np.linalg.norm(achieved.max(axis=0) - achieved.min(axis=0))
            self.d_max_ = float(span) if span > 0 else 1.0
        else:
            self.d_max_ = float(self.d_max)
        self.config_ = MatchingConfig(
            L=self.L,
            c=self.c,
            K=1,
            gamma=self.gamma,
            goal_noise_sigma=self.goal_noise,
            goal_metric=self.goal_metric,
            polyline=None if self.polyline is None else np.asarray(self.polyline, float),
        )
        self._rng = np.random.default_rng(self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "pool_")
        targets = _as_tasks(X, self.state_dim_)
        kw = {} if self.phi_ is None else {"phi": self.phi_}
        tasks, matching = select_hindsight_goals(
            targets, self.pool_, self.value_fn_, self.config_, self._rng, d_max=self.d_max_, return_matching=True, **kw
        )
        self.last_matching_ = matching
        return np.array([np.concatenate([t.initial_state, t.goal]) for t in tasks])
