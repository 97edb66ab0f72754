"""Task-space distances and the discrete Wasserstein distance between task sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import TaskInstance
from .flow import mcmf_assign

EUCLIDEAN = "euclidean"
POLYLINE = "polyline-crafted"


def _identity(x):
    return np.asarray(x, float)


@dataclass(frozen=True)
class MetricConfig:
    """Weight ``c`` on initial-state distance plus the goal metric to use.

    ``phi`` maps states to goal space; the identity is assumed when states
    already live in goal space.
    """

    c: float = 3.0
    goal_metric: str = EUCLIDEAN
    polyline: Optional[np.ndarray] = None
    phi: Callable = field(default=_identity, compare=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.goal_metric not in (EUCLIDEAN, POLYLINE):
            raise ValueError(f"unknown goal metric {self.goal_metric!r}")
        if self.goal_metric == POLYLINE:
            if self.polyline is None:
                raise ValueError("polyline-crafted metric needs waypoints")
            pts = np.asarray(self.polyline, float)
            if pts.ndim != 2 or len(pts) < 2:
                raise ValueError("polyline needs at least two waypoints")
            object.__setattr__(self, "polyline", pts)
        elif self.polyline is not None:
            raise ValueError("waypoints are only used by the polyline-crafted metric")


class Polyline:
    """Closest-point projection and arclength coordinates on a polygonal line."""

    def __init__(self, waypoints):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two waypoints")
        self.points = pts
        self.starts = pts[:-1]
        self.vectors = pts[1:] - pts[:-1]
        self.lengths = np.linalg.norm(self.vectors, axis=1)
        if not self.lengths.sum() > 0:
            raise ValueError("degenerate polyline with zero total length")
        self.offsets = np.concatenate([[0.0], np.cumsum(self.lengths)])

    def project(self, points):
        """Return ``(distance_to_line, arclength_of_projection)`` per point.

        Ties between equidistant segments go to the earliest segment.
        """
        p = np.asarray(points, dtype=float)
        flat = p.reshape(-1, p.shape[-1])
        rel = flat[:, None, :] - self.starts[None]
        sq = self.lengths**2
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.einsum("nsd,sd->ns", rel, self.vectors) / sq
        t = np.where(sq > 0, np.clip(t, 0.0, 1.0), 0.0)
        closest = self.starts[None] + t[..., None] * self.vectors[None]
        dist = np.linalg.norm(flat[:, None, :] - closest, axis=-1)
        seg = np.argmin(dist, axis=1)
        rows = np.arange(len(flat))
        off = dist[rows, seg]
        arc = self.offsets[seg] + t[rows, seg] * self.lengths[seg]
        shape = p.shape[:-1]
        return off.reshape(shape), arc.reshape(shape)


def polyline_goal_distance(g, g_star, polyline) -> float:
    """Distance from ``g`` to the line plus arclength between both projections."""
    line = polyline if isinstance(polyline, Polyline) else Polyline(polyline)
    off, arc = line.project(np.asarray(g, float))
    _, arc_star = line.project(np.asarray(g_star, float))
    return float(off + abs(arc - arc_star))


def goal_distance_matrix(goals, targets, cfg: MetricConfig):
    """Pairwise goal distances: ``goals[..., G]`` against ``targets[K, G]``.

    Returns an array of shape ``(K,) + goals.shape[:-1]``.
    """
    goals = np.asarray(goals, float)
    targets = np.asarray(targets, float)
    if cfg.goal_metric == EUCLIDEAN:
        diff = goals[None] - targets.reshape((len(targets),) + (1,) * (goals.ndim - 1) + (-1,))
        return np.linalg.norm(diff, axis=-1)
    line = Polyline(cfg.polyline)
    off, arc = line.project(goals)
    _, arc_t = line.project(targets)
    arc_t = arc_t.reshape((len(targets),) + (1,) * (goals.ndim - 1))
    return off[None] + np.abs(arc[None] - arc_t)


def goal_distance(g, g_prime, cfg: MetricConfig) -> float:
    if cfg.goal_metric == EUCLIDEAN:
        return float(np.linalg.norm(np.asarray(g, float) - np.asarray(g_prime, float)))
    return polyline_goal_distance(g, g_prime, cfg.polyline)


def task_distance(a: TaskInstance, b: TaskInstance, cfg: MetricConfig = MetricConfig()) -> float:
    init = np.linalg.norm(cfg.phi(a.initial_state) - cfg.phi(b.initial_state))
    return float(cfg.c * init + goal_distance(a.goal, b.goal, cfg))


def task_distance_matrix(A: Sequence[TaskInstance], B: Sequence[TaskInstance], cfg: MetricConfig):
    pa = np.stack([cfg.phi(t.initial_state) for t in A])
    pb = np.stack([cfg.phi(t.initial_state) for t in B])
    ga = np.stack([t.goal for t in A])
    gb = np.stack([t.goal for t in B])
    init = np.linalg.norm(pa[:, None] - pb[None], axis=-1)
    goal = goal_distance_matrix(gb, ga, cfg)  # (|A|, |B|)
    return cfg.c * init + goal


def wasserstein_discrete(A: Sequence[TaskInstance], B: Sequence[TaskInstance], cfg: MetricConfig = MetricConfig()) -> float:
    """Wasserstein distance between two equal-size uniform particle sets.

    With equal weights the optimal coupling is a permutation, so the distance
    is the minimum-cost perfect matching divided by ``K``.
    """
    if len(A) != len(B):
        raise ValueError(f"particle sets differ in size ({len(A)} vs {len(B)})")
    if len(A) == 0:
        raise ValueError("particle sets must be nonempty")
    cost = task_distance_matrix(A, B, cfg)
    cols = mcmf_assign(cost)
    return float(cost[np.arange(len(A)), cols].sum() / len(A))
