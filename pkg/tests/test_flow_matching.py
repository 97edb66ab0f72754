import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from hgg.core import TaskInstance
from hgg.flow import InfeasibleMatchingError, assignment_cost, mcmf_assign
from hgg.matching import (
    MatchingConfig,
    cost_matrix,
    match_hindsight_goals,
    normalize_lipschitz,
    select_hindsight_goals,
    trajectory_score,
)
from hgg.metric import MetricConfig, wasserstein_discrete

from conftest import make_trajectory


def brute_assignment(cost):
    k, n = cost.shape
    return min(sum(cost[i, j] for i, j in enumerate(p)) for p in itertools.permutations(range(n), k))


def random_trajectory(rng, horizon, dim=2):
    states = rng.uniform(-1, 1, size=(horizon + 1, dim))
    return make_trajectory(states, rng.uniform(-1, 1, dim))


def random_value_fn(rng):
    w = rng.normal(size=4)

    def value(states, goals):
        return -np.abs(np.sin(np.concatenate([states, goals], axis=1) @ w)) * 10

    return value


def naive_score(target, traj, value_fn, c, l_star):
    """Edge weight by direct enumeration over steps with plain python loops."""
    best, best_t = np.inf, -1
    init = c * np.sqrt(sum((a - b) ** 2 for a, b in zip(target.initial_state, traj.states[0])))
    for t, g in enumerate(traj.achieved_goals):
        dist = np.sqrt(sum((a - b) ** 2 for a, b in zip(target.goal, g)))
        v = 0.0 if value_fn is None else float(value_fn(traj.states[0][None], g[None])[0])
        s = init + dist - v / l_star
        if s < best:
            best, best_t = s, t
    return best, best_t


# -- min-cost max-flow -------------------------------------------------------


def test_mcmf_matches_brute_force(rng):
    for _ in range(500):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(k, 9))
        cost = rng.normal(size=(k, n)) * rng.choice([1, 100])
        if rng.uniform() < 0.3:
            cost = np.round(cost)  # many ties
        cols = mcmf_assign(cost)
        assert len(set(cols.tolist())) == k
        assert abs(assignment_cost(cost, cols) - brute_assignment(cost)) <= 1e-9


def test_mcmf_matches_scipy_on_large_instances(rng):
    for k, n in [(50, 50), (50, 1000), (100, 300)]:
        cost = rng.uniform(-5, 5, size=(k, n))
        rows, cols = linear_sum_assignment(cost)
        assert assignment_cost(cost, mcmf_assign(cost)) == pytest.approx(cost[rows, cols].sum(), abs=1e-9)


def test_mcmf_identity_and_single_row():
    eye = 1.0 - np.eye(4)
    assert mcmf_assign(eye).tolist() == [0, 1, 2, 3]
    row = np.array([[3.0, -1.0, 2.0, -0.5]])
    assert mcmf_assign(row).tolist() == [1]


def test_mcmf_infeasible():
    with pytest.raises(InfeasibleMatchingError):
        mcmf_assign(np.zeros((3, 2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 3), st.randoms(use_true_random=False))
def test_mcmf_columns_distinct(k, extra, rnd):
    cost = np.array([[rnd.uniform(-3, 3) for _ in range(k + extra)] for _ in range(k)])
    cols = mcmf_assign(cost)
    assert sorted(set(cols.tolist())) == sorted(cols.tolist())


# -- scoring -----------------------------------------------------------------


def test_normalize_lipschitz_example():
    assert normalize_lipschitz(5.0, 0.98, 0.5) == pytest.approx(500.0)
    assert normalize_lipschitz(5.0, 0.98, 1.0) == pytest.approx(250.0)
    with pytest.raises(ValueError):
        normalize_lipschitz(5.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        normalize_lipschitz(5.0, 0.98, 0.0)


def test_trajectory_score_min_over_steps():
    target = TaskInstance([0.0, 0.0], [1.0, 0.0])
    traj = make_trajectory([[0.0, 0.0], [1.0, 0.3], [1.0, 0.5]], np.zeros(2))
    score, best = trajectory_score(target, traj, None, MatchingConfig(), l_star=1.0)
    assert score == pytest.approx(0.3)
    assert best == 1


def test_trajectory_score_perfect_match():
    target = TaskInstance([0.2, 0.1], [0.4, 0.4])
    traj = make_trajectory([[0.2, 0.1], [0.3, 0.3], [0.4, 0.4], [0.5, 0.5]], np.zeros(2))
    score, best = trajectory_score(target, traj, lambda s, g: np.zeros(len(s)), MatchingConfig(), l_star=500.0)
    assert score == 0.0 and best == 2


def test_trajectory_score_matches_enumeration(rng):
    for _ in range(200):
        traj = random_trajectory(rng, 5)
        target = TaskInstance(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        vf = random_value_fn(rng)
        l_star = float(rng.uniform(0.5, 20))
        c = float(rng.uniform(0.1, 5))
        score, best = trajectory_score(target, traj, vf, MatchingConfig(c=c), l_star=l_star)
        ref, ref_t = naive_score(target, traj, vf, c, l_star)
        assert score == pytest.approx(ref, abs=1e-12)
        assert best == ref_t


def test_value_peak_selects_that_state():
    # small L*: the value bias dominates distance differences
    states = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.3, 0.0]])
    traj = make_trajectory(states, np.zeros(2))
    peak = states[2]

    def value(s, g):
        return np.where(np.all(np.isclose(g, peak), axis=1), 0.0, -50.0)

    target = TaskInstance([0.0, 0.0], [0.31, 0.0])
    _, best = trajectory_score(target, traj, value, MatchingConfig(), l_star=1.0)
    assert best == 2


def test_monotone_value_bias(rng):
    for _ in range(100):
        traj = random_trajectory(rng, 4)
        target = TaskInstance(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        base = rng.uniform(-50, 0, size=5)
        bumped = base.copy()
        bumped[rng.integers(5)] += rng.uniform(0, 10)

        def from_table(table):
            lookup = {tuple(g): v for g, v in zip(traj.achieved_goals, table)}
            return lambda s, g: np.array([lookup[tuple(x)] for x in g])

        cfg = MatchingConfig()
        lo, _ = trajectory_score(target, traj, from_table(bumped), cfg, l_star=10.0)
        hi, _ = trajectory_score(target, traj, from_table(base), cfg, l_star=10.0)
        assert lo <= hi + 1e-12


# -- matching ----------------------------------------------------------------


def test_matching_equals_exhaustive_optimum(rng):
    for _ in range(300):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(k, 9))
        horizon = int(rng.integers(1, 6))
        pool = [random_trajectory(rng, horizon) for _ in range(n)]
        targets = [TaskInstance(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)) for _ in range(k)]
        vf = random_value_fn(rng)
        cfg = MatchingConfig(L=float(rng.uniform(0.1, 10)), c=float(rng.uniform(0.1, 5)), goal_noise_sigma=0.0)
        d_max = float(rng.uniform(0.5, 3))
        l_star = normalize_lipschitz(cfg.L, cfg.gamma, d_max)
        weights = np.array([[naive_score(t, tr, vf, cfg.c, l_star)[0] for tr in pool] for t in targets])
        m = match_hindsight_goals(targets, pool, vf, cfg, d_max=d_max)
        assert abs(m.total_cost - brute_assignment(weights)) <= 1e-9


def test_greedy_is_beaten_by_matching():
    # both targets prefer trajectory 0; giving it to the first target is worse
    t_a = TaskInstance([0.0, 0.0], [1.0, 0.0])
    t_b = TaskInstance([0.0, 0.0], [1.15, 0.0])
    tr0 = make_trajectory([[0.0, 0.0], [1.1, 0.0]], np.zeros(2))
    tr1 = make_trajectory([[0.0, 0.0], [0.7, 0.0]], np.zeros(2))
    cfg = MatchingConfig(goal_noise_sigma=0.0)
    cost, _ = cost_matrix([t_a, t_b], [tr0, tr1], None, cfg, l_star=np.inf)
    assert cost.argmin(axis=1).tolist() == [0, 0]
    greedy_total = cost[0, 0] + cost[1, 1]
    m = match_hindsight_goals([t_a, t_b], [tr0, tr1], None, cfg, d_max=1.0)
    assert m.trajectory_indices.tolist() == [1, 0]
    assert m.total_cost == pytest.approx(brute_assignment(cost))
    assert m.total_cost == pytest.approx(0.35)
    assert m.total_cost < greedy_total - 0.1


def test_exact_cover_pool_returns_targets(rng):
    targets = [TaskInstance(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)) for _ in range(5)]
    pool = []
    for t in targets:
        states = np.linspace(t.initial_state, t.goal, 4)
        pool.append(make_trajectory(states, t.goal))
    pool += [random_trajectory(rng, 3) for _ in range(3)]
    order = rng.permutation(len(pool))
    pool = [pool[i] for i in order]
    cfg = MatchingConfig(goal_noise_sigma=0.0)
    zero = lambda s, g: np.zeros(len(s))  # noqa: E731
    tasks = select_hindsight_goals(targets, pool, zero, cfg, rng, d_max=1.0)
    for got, want in zip(tasks, targets):
        assert got == want


def test_diversity_hindsightness_and_noise(rng):
    targets = [TaskInstance(np.zeros(2), np.array([1.0, 1.0])) for _ in range(4)]
    pool = [random_trajectory(rng, 5) for _ in range(7)]
    cfg = MatchingConfig(goal_noise_sigma=0.0)
    tasks, m = select_hindsight_goals(targets, pool, None, cfg, rng, d_max=1.0, return_matching=True)
    idx = m.trajectory_indices
    assert len(set(idx.tolist())) == len(idx)
    for (i, j, t), task in zip(m.assignment.pairs, tasks):
        assert np.array_equal(task.goal, pool[j].achieved_goals[t])
        assert np.array_equal(task.initial_state, targets[i].initial_state)
    noisy = select_hindsight_goals(targets, pool, None, MatchingConfig(goal_noise_sigma=0.05), rng, d_max=1.0)
    diffs = np.stack([a.goal - b.goal for a, b in zip(noisy, tasks)])
    assert np.all(diffs != 0) and np.all(np.abs(diffs) < 0.5)


def test_goal_bounds_clip(rng):
    targets = [TaskInstance(np.zeros(2), np.array([1.0, 1.0]))]
    pool = [make_trajectory([[0.0, 0.0], [0.99, 0.99]], np.zeros(2))]
    cfg = MatchingConfig(goal_noise_sigma=1.0)
    (task,) = select_hindsight_goals(targets, pool, None, cfg, rng, d_max=1.0, goal_bounds=(-1.0, 1.0))
    assert np.all(np.abs(task.goal) <= 1.0)


def test_small_pool_asks_for_warm_up(rng):
    targets = [TaskInstance(np.zeros(2), np.ones(2)) for _ in range(3)]
    with pytest.raises(InfeasibleMatchingError, match="warm up"):
        select_hindsight_goals(targets, [random_trajectory(rng, 2)], None, MatchingConfig(), rng, d_max=1.0)


def test_barycenter_consistency(rng):
    """With zero value and no noise, total cost is K times the Wasserstein distance."""
    for _ in range(50):
        k = int(rng.integers(1, 6))
        targets = [TaskInstance(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)) for _ in range(k)]
        # each trajectory starts at a target's initial state so the emitted task
        # (target s0, achieved goal) differs from its pair only in the goal term
        pool = []
        for t in targets:
            states = np.vstack([t.initial_state, rng.uniform(-1, 1, size=(3, 2))])
            pool.append(make_trajectory(states, t.goal))
        cfg = MatchingConfig(goal_noise_sigma=0.0)
        m = match_hindsight_goals(targets, pool, None, cfg, d_max=1.0)
        matched = [TaskInstance(pool[j].states[0], pool[j].achieved_goals[t]) for _, j, t in m.assignment.pairs]
        w = wasserstein_discrete(targets, matched, MetricConfig(c=cfg.c))
        assert m.total_cost == pytest.approx(k * w, abs=1e-9)
