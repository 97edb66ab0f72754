"""Goal-conditioned DDPG agent (universal value function approximator)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .nn import Adam, DenseNet, Normalizer

CHECKPOINT_MAGIC = "hgg-checkpoint"
CHECKPOINT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class AgentConfig:
    hidden: Tuple[int, ...] = (256, 256, 256)
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    gamma: float = 0.98
    polyak: float = 0.95
    action_l2: float = 1.0
    random_eps: float = 0.3
    noise_eps: float = 0.2
    dtype: str = "float64"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.polyak <= 1:
            raise ValueError("polyak coefficient must lie in [0, 1]")
        if not (0 <= self.random_eps <= 1 and self.noise_eps >= 0):
            raise ValueError("invalid exploration parameters")


@dataclass
class Batch:
    obs: np.ndarray
    goals: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    rewards: np.ndarray


class DDPGAgent:
    """Deterministic actor ``pi(s, g)`` and critic ``Q(s, g, a)`` with target copies.

    Observations and goals are normalised by running statistics; actions enter
    the critic scaled to ``[-1, 1]``.
    """

    def __init__(self, obs_dim, goal_dim, action_dim, action_bound=1.0, config=None, rng=None):
        self.config = config if config is not None else AgentConfig()
        self.obs_dim = int(obs_dim)
        self.goal_dim = int(goal_dim)
        self.action_dim = int(action_dim)
        self.action_bound = float(action_bound)
        rng = np.random.default_rng(rng)
        hidden = list(self.config.hidden)
        dtype = np.dtype(self.config.dtype)
        self.actor = DenseNet([obs_dim + goal_dim, *hidden, action_dim], output="tanh", rng=rng, dtype=dtype)
        self.critic = DenseNet([obs_dim + goal_dim + action_dim, *hidden, 1], output="linear", rng=rng, dtype=dtype)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.flat.size, lr=self.config.lr_actor, dtype=dtype)
        self.critic_opt = Adam(self.critic.flat.size, lr=self.config.lr_critic, dtype=dtype)
        self.obs_norm = Normalizer(obs_dim)
        self.goal_norm = Normalizer(goal_dim)
        self.n_updates = 0

    @property
    def value_bounds(self):
        return -1.0 / (1.0 - self.config.gamma), 0.0

    def _inputs(self, obs, goals):
        x = np.concatenate([self.obs_norm(obs), self.goal_norm(goals)], axis=-1)
        return x.astype(self.actor.dtype, copy=False)

    # -- acting ----------------------------------------------------------
    def policy(self, obs, goals):
        """Deterministic actions for a batch of observations and goals."""
        x = self._inputs(np.atleast_2d(obs), np.atleast_2d(goals))
        return self.actor.forward(x).astype(float) * self.action_bound

    def act(self, obs, goal, explore=False, rng=None):
        return self.act_batch(np.asarray(obs)[None], np.asarray(goal)[None], explore, rng)[0]

    def act_batch(self, obs, goals, explore=False, rng=None):
        u = self.policy(obs, goals)
        if not explore:
            return u
        b = self.action_bound
        u = u + self.config.noise_eps * b * rng.standard_normal(u.shape)
        u = np.clip(u, -b, b)
        random_u = rng.uniform(-b, b, size=u.shape)
        take_random = rng.uniform(size=(len(u), 1)) < self.config.random_eps
        return np.where(take_random, random_u, u)

    def value_estimate(self, obs, goals):
        """Clipped ``Q(s, pi(s, g), g)``, the surrogate for ``V(s, g)``."""
        obs = np.atleast_2d(obs)
        goals = np.atleast_2d(goals)
        x = self._inputs(obs, goals)
        a = self.actor.forward(x)
        q = self.critic.forward(np.concatenate([x, a], axis=1))[:, 0]
        lo, hi = self.value_bounds
        return np.clip(q.astype(float), lo, hi)

    # -- learning --------------------------------------------------------
    def update_normalizer(self, obs, goals):
        self.obs_norm.update(obs)
        self.goal_norm.update(goals)

    def bellman_targets(self, batch: Batch):
        x2 = self._inputs(batch.next_obs, batch.goals)
        a2 = self.actor_target.forward(x2)
        q2 = self.critic_target.forward(np.concatenate([x2, a2], axis=1))[:, 0]
        lo, hi = self.value_bounds
        return np.clip(batch.rewards + self.config.gamma * q2, lo, hi).astype(q2.dtype)

    def critic_loss_and_grads(self, x, actions_scaled, targets):
        q, cache = self.critic.forward(np.concatenate([x, actions_scaled], axis=1), cache=True)
        err = q[:, 0] - targets
        loss = float(np.mean(err**2))
        grads, _ = self.critic.backward(cache, ((2.0 / len(err)) * err[:, None]).astype(q.dtype))
        return loss, grads

    def actor_loss_and_grads(self, x):
        a, a_cache = self.actor.forward(x, cache=True)
        q, q_cache = self.critic.forward(np.concatenate([x, a], axis=1), cache=True)
        n = len(a)
        loss = float(-np.mean(q) + self.config.action_l2 * np.mean(a * a))
        _, g_in = self.critic.backward(q_cache, np.full((n, 1), -1.0 / n, dtype=q.dtype))
        g_a = g_in[:, -self.action_dim:] + self.config.action_l2 * 2.0 * a / a.size
        grads, _ = self.actor.backward(a_cache, g_a)
        return loss, grads

    def train_step(self, batch: Batch):
        targets = self.bellman_targets(batch)
        x = self._inputs(batch.obs, batch.goals)
        a_scaled = (np.asarray(batch.actions) / self.action_bound).astype(x.dtype)
        critic_loss, c_grads = self.critic_loss_and_grads(x, a_scaled, targets)
        actor_loss, a_grads = self.actor_loss_and_grads(x)
        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
            raise NonFiniteLossError(
                f"non-finite loss after {self.n_updates} updates: critic={critic_loss}, actor={actor_loss}"
            )
        self.critic_opt.step(self.critic.flat, DenseNet.flatten(c_grads))
        self.actor_opt.step(self.actor.flat, DenseNet.flatten(a_grads))
        self.n_updates += 1
        return critic_loss, actor_loss

    def polyak_update(self, coef=None):
        coef = self.config.polyak if coef is None else coef
        for net, target in ((self.actor, self.actor_target), (self.critic, self.critic_target)):
            target.flat *= coef
            target.flat += (1.0 - coef) * net.flat

    # -- checkpoints -----------------------------------------------------
    def _tensors(self):
        out = {}
        for name, net in (
            ("actor", self.actor),
            ("critic", self.critic),
            ("actor_target", self.actor_target),
            ("critic_target", self.critic_target),
        ):
            for k, p in enumerate(net.params):
                out[f"{name}.{k}"] = p
        for name, norm in (("obs_norm", self.obs_norm), ("goal_norm", self.goal_norm)):
            out[f"{name}.sum"] = norm.sum
            out[f"{name}.sumsq"] = norm.sumsq
            out[f"{name}.count"] = np.array([float(norm.count)])
        return out

    def save(self, path):
        tensors = self._tensors()
        header = {
            "format": CHECKPOINT_MAGIC,
            "version": CHECKPOINT_VERSION,
            "dtype": "<f8",
            "dims": [self.obs_dim, self.goal_dim, self.action_dim],
            "action_bound": self.action_bound,
            "config": asdict(self.config),
            "tensors": [[name, list(t.shape)] for name, t in tensors.items()],
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode() + b"\n")
            for t in tensors.values():
                fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        head, _, body = raw.partition(b"\n")
        header = json.loads(head)
        if header.get("format") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not an agent checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        obs_dim, goal_dim, action_dim = header["dims"]
        agent = cls(obs_dim, goal_dim, action_dim, header["action_bound"], AgentConfig(**header["config"]), rng=0)
        tensors = agent._tensors()
        offset = 0
        for name, shape in header["tensors"]:
            n = int(np.prod(shape))
            arr = np.frombuffer(body, dtype="<f8", count=n, offset=offset).reshape(shape)
            offset += 8 * n
            tensors[name][...] = arr
        if offset != len(body):
            raise ValueError("checkpoint body length does not match its header")
        agent._restore_normalizers(tensors)
        return agent

    def _restore_normalizers(self, tensors):
        for name, norm in (("obs_norm", self.obs_norm), ("goal_norm", self.goal_norm)):
            count = int(tensors[f"{name}.count"][0])
            norm.count = count
            if count > 0:
                norm.mean = norm.sum / count
                var = np.maximum(norm.eps**2, norm.sumsq / count - norm.mean**2)
                norm.std = np.sqrt(var)
