"""Outer training loop: target sampling, goal generation, rollouts and DDPG updates."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Tuple

import numpy as np

from .agent import AgentConfig, Batch, DDPGAgent
from .core import ReplayBuffer, TaskInstance, Trajectory
from .envs import DeskEnv, default_polyline, make_env
from .matching import MatchingConfig, select_hindsight_goals
from .metric import EUCLIDEAN, POLYLINE, MetricConfig, wasserstein_discrete
from .replay import sample_minibatch

MODES = ("hgg", "her-baseline")
MODE_ALIASES = {"her": "her-baseline", "hgg": "hgg", "her-baseline": "her-baseline"}


@dataclass
class RunConfig:
    env: str = "desk-push"
    mode: str = "hgg"
    iterations: int = 100
    K: int = 50
    batches_per_episode: int = 20
    batch_size: int = 256
    buffer_size: int = 10_000
    pool_size: int = 1000
    her_prob: float = 0.8
    L: float = 5.0
    c: float = 3.0
    gamma: float = 0.98
    goal_noise: float = 0.05
    goal_metric: str = EUCLIDEAN
    hidden: Tuple[int, ...] = (64, 64)
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    polyak: float = 0.95
    action_l2: float = 1.0
    random_eps: float = 0.3
    noise_eps: float = 0.2
    dtype: str = "float32"
    horizon: int = 50
    success_threshold: float = 0.02
    step_scale: float = 0.05
    eval_episodes: int = 50
    seed: int = 0

    def __post_init__(self):
        try:
            self.mode = MODE_ALIASES[self.mode]
        except KeyError:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {sorted(MODE_ALIASES)}") from None
        if isinstance(self.hidden, str):
            self.hidden = tuple(int(h) for h in self.hidden.replace("x", ",").split(",") if h)
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.goal_metric not in (EUCLIDEAN, POLYLINE):
            raise ValueError(f"unknown goal metric {self.goal_metric!r}")
        positive_ints = ("iterations", "K", "batches_per_episode", "batch_size", "buffer_size", "pool_size", "horizon")
        for name in positive_ints:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.eval_episodes < 0:
            raise ValueError("eval_episodes must be nonnegative")
        if not 0 <= self.her_prob <= 1:
            raise ValueError("her_prob must lie in [0, 1]")
        if self.pool_size > self.buffer_size:
            raise ValueError("pool_size cannot exceed buffer_size")
        if self.mode == "hgg" and self.pool_size < self.K:
            raise ValueError("pool_size must be at least K so K distinct trajectories can be matched")
        # delegate remaining range checks to the component configs
        self.agent_config()
        MatchingConfig(L=self.L, c=self.c, K=self.K, gamma=self.gamma, goal_noise_sigma=self.goal_noise)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            hidden=self.hidden,
            lr_actor=self.lr_actor,
            lr_critic=self.lr_critic,
            gamma=self.gamma,
            polyak=self.polyak,
            action_l2=self.action_l2,
            random_eps=self.random_eps,
            noise_eps=self.noise_eps,
            dtype=self.dtype,
        )

    def matching_config(self, env: DeskEnv) -> MatchingConfig:
        polyline = default_polyline(env) if self.goal_metric == POLYLINE else None
        if self.goal_metric == POLYLINE and polyline is None:
            raise ValueError(f"{self.env} has no crafted polyline metric")
        return MatchingConfig(
            L=self.L,
            c=self.c,
            K=self.K,
            gamma=self.gamma,
            goal_noise_sigma=self.goal_noise,
            goal_metric=self.goal_metric,
            polyline=polyline,
        )

    def as_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class IterationReport:
    iteration: int
    episodes: int
    train_steps: int
    success_rate: float
    matched: bool
    matching_cost: float
    goal_target_wasserstein: float
    critic_loss: float
    actor_loss: float
    seconds: float
    exploration_goals: np.ndarray = field(repr=False)
    target_goals: np.ndarray = field(repr=False)
    source_trajectories: Optional[np.ndarray] = field(default=None, repr=False)


class TrainingState:
    """Everything that evolves during a run: agent, buffer, RNG streams, counters."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.env = make_env(
            config.env,
            horizon=config.horizon,
            success_threshold=config.success_threshold,
            step_scale=config.step_scale,
        )
        seeds = np.random.SeedSequence(config.seed).spawn(5)
        self.rng_init, self.rng_tasks, self.rng_explore, self.rng_replay, self.rng_eval = (
            np.random.default_rng(s) for s in seeds
        )
        env = self.env
        self.agent = DDPGAgent(
            env.observation_dim,
            env.spec.goal_dim,
            env.spec.action_dim,
            env.spec.action_bound,
            config.agent_config(),
            rng=self.rng_init,
        )
        self.buffer = ReplayBuffer(config.buffer_size)
        self.matching = config.matching_config(env) if config.mode == "hgg" else None
        self.iteration = 0
        self.episodes = 0
        self.train_steps = 0
        self.matching_calls = 0

    def value_fn(self, states, goals):
        return self.agent.value_estimate(self.env.observe(states), goals)


def rollout(env: DeskEnv, agent: DDPGAgent, task: TaskInstance, explore: bool, rng=None) -> Trajectory:
    state = env.reset(task)
    h = env.spec.horizon
    states = np.empty((h + 1, env.spec.state_dim))
    actions = np.empty((h, env.spec.action_dim))
    rewards = np.empty(h)
    achieved = np.empty((h + 1, env.spec.goal_dim))
    states[0] = state
    achieved[0] = env.phi(state)
    for t in range(h):
        a = agent.act(env.observe(state), task.goal, explore=explore, rng=rng)
        state, r, ag = env.step(a)
        states[t + 1] = state
        actions[t] = a
        rewards[t] = r
        achieved[t + 1] = ag
    return Trajectory(task, states, actions, rewards, achieved)


def evaluate(agent: DDPGAgent, env: DeskEnv, n_episodes: int, rng) -> float:
    """Fraction of greedy episodes on fresh target tasks that end within threshold."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    tasks = env.sample_target_tasks(rng, n_episodes)
    s0 = np.stack([t.initial_state for t in tasks])
    goals = np.stack([t.goal for t in tasks])
    path = env.rollout_batch(s0, goals, lambda s, g: agent.policy(env.observe(s), g))
    final = env.phi(path[:, -1])
    return float(np.mean(np.linalg.norm(final - goals, axis=1) <= env.spec.success_threshold))


def train_on_buffer(state: TrainingState, n_batches: int):
    cfg = state.config
    env, agent = state.env, state.agent
    c_losses, a_losses = [], []
    for _ in range(n_batches):
        mb = sample_minibatch(state.buffer, cfg.batch_size, cfg.her_prob, state.rng_replay, env.compute_reward)
        batch = Batch(env.observe(mb.states), mb.goals, mb.actions, env.observe(mb.next_states), mb.rewards)
        c, a = agent.train_step(batch)
        agent.polyak_update()
        state.train_steps += 1
        c_losses.append(c)
        a_losses.append(a)
    return c_losses, a_losses


def generate_exploration_tasks(state: TrainingState, targets: List[TaskInstance]):
    """Exploration tasks for this iteration and the matching (None on warm-up/baseline)."""
    cfg = state.config
    if cfg.mode != "hgg" or len(state.buffer) < cfg.K:
        return list(targets), None
    env = state.env
    pool = state.buffer.matching_pool(cfg.pool_size)
    w = env.table_half_width
    tasks, matching = select_hindsight_goals(
        targets,
        pool,
        state.value_fn,
        state.matching,
        state.rng_explore,
        d_max=env.goal_space_diameter,
        phi=env.phi,
        goal_bounds=(-w, w),
        return_matching=True,
    )
    state.matching_calls += 1
    return tasks, matching


def run_iteration(state: TrainingState) -> IterationReport:
    cfg = state.config
    env, agent = state.env, state.agent
    start = time.perf_counter()
    targets = env.sample_target_tasks(state.rng_tasks, cfg.K)
    tasks, matching = generate_exploration_tasks(state, targets)

    c_losses, a_losses = [], []
    for task in tasks:
        traj = rollout(env, agent, task, explore=True, rng=state.rng_explore)
        state.buffer.push(traj)
        state.episodes += 1
        agent.update_normalizer(
            env.observe(traj.states),
            np.vstack([np.broadcast_to(task.goal, traj.achieved_goals.shape), traj.achieved_goals]),
        )
        c, a = train_on_buffer(state, cfg.batches_per_episode)
        c_losses += c
        a_losses += a

    state.iteration += 1
    success = evaluate(agent, env, cfg.eval_episodes, state.rng_eval) if cfg.eval_episodes else float("nan")
    if matching is not None:
        metric = MetricConfig(c=cfg.c, phi=env.phi)
        w_dist = wasserstein_discrete(tasks, targets, metric)
        m_cost = matching.total_cost / cfg.K
        sources = matching.trajectory_indices
    else:
        w_dist = 0.0
        m_cost = float("nan")
        sources = None
    return IterationReport(
        iteration=state.iteration,
        episodes=state.episodes,
        train_steps=state.train_steps,
        success_rate=success,
        matched=matching is not None,
        matching_cost=m_cost,
        goal_target_wasserstein=w_dist,
        critic_loss=float(np.mean(c_losses)),
        actor_loss=float(np.mean(a_losses)),
        seconds=time.perf_counter() - start,
        exploration_goals=np.stack([t.goal for t in tasks]),
        target_goals=np.stack([t.goal for t in targets]),
        source_trajectories=sources,
    )


def train(config: RunConfig, callback=None) -> Tuple[TrainingState, List[IterationReport]]:
    state = TrainingState(config)
    reports = []
    for _ in range(config.iterations):
        report = run_iteration(state)
        reports.append(report)
        if callback is not None:
            callback(state, report)
    return state, reports
