import numpy as np
import pytest

from hgg.agent import AgentConfig, Batch, DDPGAgent, NonFiniteLossError
from hgg.nn import DenseNet
from hgg.training import RunConfig, train

SMALL = AgentConfig(hidden=(16, 16), dtype="float64")


def small_agent(seed=0, **kw):
    cfg = AgentConfig(**{**SMALL.__dict__, **kw})
    return DDPGAgent(4, 2, 2, 1.0, cfg, rng=seed)


def numeric_grad(net, loss_fn, h=1e-6):
    grad = np.empty_like(net.flat)
    for i in range(net.flat.size):
        old = net.flat[i]
        net.flat[i] = old + h
        up = loss_fn()
        net.flat[i] = old - h
        down = loss_fn()
        net.flat[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def check_per_tensor(net, analytic, numeric, tol=1e-4):
    for a, n in zip(net._views(analytic), net._views(numeric)):
        assert rel_error(a, n) <= tol


def test_critic_gradient_matches_finite_differences(rng):
    agent = small_agent()
    x = rng.normal(size=(100, 6))
    a = rng.uniform(-1, 1, size=(100, 2))
    targets = rng.uniform(-50, 0, size=100)
    _, grads = agent.critic_loss_and_grads(x, a, targets)
    analytic = DenseNet.flatten(grads).copy()
    numeric = numeric_grad(agent.critic, lambda: agent.critic_loss_and_grads(x, a, targets)[0])
    check_per_tensor(agent.critic, analytic, numeric)


def test_actor_gradient_matches_finite_differences(rng):
    agent = small_agent()
    x = rng.normal(size=(100, 6))
    _, grads = agent.actor_loss_and_grads(x)
    analytic = DenseNet.flatten(grads).copy()
    numeric = numeric_grad(agent.actor, lambda: agent.actor_loss_and_grads(x)[0])
    check_per_tensor(agent.actor, analytic, numeric)


def test_network_input_gradient(rng):
    net = DenseNet([3, 16, 16, 2], output="tanh", rng=rng)
    x = rng.normal(size=(5, 3))
    w = rng.normal(size=(5, 2))
    out, cache = net.forward(x, cache=True)
    _, g_in = net.backward(cache, w)
    h = 1e-6
    num = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        num[idx] = ((net.forward(xp) - net.forward(xm)) * w).sum() / (2 * h)
    assert rel_error(g_in, num) <= 1e-6


def test_targets_start_equal_to_online():
    agent = small_agent()
    assert np.array_equal(agent.actor.flat, agent.actor_target.flat)
    assert np.array_equal(agent.critic.flat, agent.critic_target.flat)
    assert agent.actor.flat is not agent.actor_target.flat


def test_polyak_examples():
    agent = small_agent()
    before = agent.critic_target.flat.copy()
    agent.polyak_update()
    assert np.allclose(agent.critic_target.flat, before, rtol=0, atol=1e-15)  # fixed point
    agent.actor.flat[:] = 1.0
    agent.actor_target.flat[:] = 0.0
    agent.polyak_update()
    assert np.allclose(agent.actor_target.flat, 0.05)
    for _ in range(9):
        agent.polyak_update()
    assert np.allclose(agent.actor_target.flat, 1 - 0.95**10)


def test_act_is_deterministic_and_clamped(rng):
    agent = DDPGAgent(4, 2, 2, action_bound=0.5, config=SMALL, rng=1)
    obs, goal = rng.normal(size=4) * 10, rng.normal(size=2)
    assert np.array_equal(agent.act(obs, goal), agent.act(obs, goal))
    acts = agent.act_batch(np.tile(obs, (5000, 1)), np.tile(goal, (5000, 1)), explore=True, rng=rng)
    assert np.all(np.abs(acts) <= 0.5)
    greedy = agent.act(obs, goal)
    # about 30% of exploratory actions are uniform draws unrelated to the policy
    noisy = np.abs(acts - greedy).max(axis=1) > 4 * 0.2 * 0.5
    assert 0.15 < noisy.mean() < 0.35


def test_value_estimate_is_clipped(rng):
    agent = small_agent()
    lo = -1.0 / (1.0 - agent.config.gamma)
    v = agent.value_estimate(rng.normal(size=(50, 4)), rng.normal(size=(50, 2)))
    assert np.all((v >= lo) & (v <= 0))
    agent.critic.params[-1][:] = -1e6
    assert np.all(agent.value_estimate(rng.normal(size=(5, 4)), rng.normal(size=(5, 2))) == lo)
    agent.critic.params[-1][:] = 1e6
    assert np.all(agent.value_estimate(rng.normal(size=(5, 4)), rng.normal(size=(5, 2))) == 0.0)


def test_bellman_targets_clipped(rng):
    agent = small_agent()
    batch = Batch(rng.normal(size=(8, 4)), rng.normal(size=(8, 2)), rng.uniform(-1, 1, (8, 2)), rng.normal(size=(8, 4)), np.zeros(8))
    agent.critic_target.params[-1][:] = 10.0
    assert np.all(agent.bellman_targets(batch) == 0.0)
    agent.critic_target.params[-1][:] = -1e4
    assert np.all(agent.bellman_targets(batch) == agent.value_bounds[0])
    assert agent.value_bounds[0] == pytest.approx(-50.0)


def test_single_transition_convergence(rng):
    agent = small_agent()
    one = Batch(rng.normal(size=(1, 4)), rng.normal(size=(1, 2)), rng.uniform(-1, 1, (1, 2)), rng.normal(size=(1, 4)), np.array([-1.0]))
    for _ in range(1000):
        agent.train_step(one)
        agent.polyak_update()
    x = agent._inputs(one.obs, one.goals)
    q = agent.critic.forward(np.concatenate([x, one.actions], axis=1))[0, 0]
    assert abs(q - agent.bellman_targets(one)[0]) <= 1e-2


def test_non_finite_loss_aborts(rng):
    agent = small_agent()
    batch = Batch(rng.normal(size=(4, 4)), rng.normal(size=(4, 2)), rng.uniform(-1, 1, (4, 2)), rng.normal(size=(4, 4)), np.array([0.0, -1.0, np.nan, 0.0]))
    with pytest.raises(NonFiniteLossError, match="non-finite"):
        agent.train_step(batch)


def test_checkpoint_round_trip(tmp_path, rng):
    agent = small_agent()
    agent.update_normalizer(rng.normal(size=(30, 4)), rng.normal(size=(30, 2)))
    batch = Batch(rng.normal(size=(16, 4)), rng.normal(size=(16, 2)), rng.uniform(-1, 1, (16, 2)), rng.normal(size=(16, 4)), -np.ones(16))
    for _ in range(3):
        agent.train_step(batch)
        agent.polyak_update()
    path = tmp_path / "agent.ckpt"
    agent.save(path)
    header = path.read_bytes().split(b"\n", 1)[0]
    assert b'"hgg-checkpoint"' in header and b'"<f8"' in header
    clone = DDPGAgent.load(path)
    obs, goals = rng.normal(size=(10, 4)), rng.normal(size=(10, 2))
    assert np.array_equal(clone.policy(obs, goals), agent.policy(obs, goals))
    assert np.array_equal(clone.value_estimate(obs, goals), agent.value_estimate(obs, goals))
    assert np.array_equal(clone.critic_target.flat, agent.critic_target.flat)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(ValueError):
        DDPGAgent.load(path)


def test_trained_reach_values_prefer_near_goals():
    cfg = RunConfig(env="desk-reach", mode="her", iterations=10, K=50, eval_episodes=10, seed=3)
    state, _ = train(cfg)
    rng = np.random.default_rng(0)
    env = state.env
    ordered = 0
    for _ in range(100):
        s0 = env.initial_state(np.zeros(2))
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        near = s0 + direction * rng.uniform(0.02, 0.04)
        far = s0 + direction * rng.uniform(0.2, 0.24)
        v = state.value_fn(np.stack([s0, s0]), np.stack([near, far]))
        ordered += v[0] > v[1]
    assert ordered >= 90
