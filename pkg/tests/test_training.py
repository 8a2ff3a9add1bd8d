from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from srkitchen.config import TrainConfig
from srkitchen.domain import Task, TaskLevel
from srkitchen.env import KitchenEnv
from srkitchen.planner import plan, validate_plan
from srkitchen.seeding import derive_seed
from srkitchen.sr_model import SRConfig, SRNetwork
from srkitchen.training import (
    ILDataset,
    Optimizer,
    ReplayBuffer,
    TabularSR,
    discounted_returns,
    epsilon_schedule,
    generate_il_dataset,
    il_train,
    il_update,
    invalid_action_targets,
    plan_return,
    rl_train,
    rl_update,
    soft_update,
)
from srkitchen.transfer import value_iteration

from helpers import TINY_TASKS, TabularEnv, tiny_scene


@pytest.fixture(scope="module")
def tiny():
    return tiny_scene()


def tiny_env(tiny, level="medium", **kw):
    return KitchenEnv(tiny, TINY_TASKS[level], **kw)


class GroupSGD(Optimizer):
    """Plain SGD with one learning rate per parameter array."""

    def __init__(self, rates):
        super().__init__("sgd", 1.0)
        self.rates = rates

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.rates[k] * g


# --- targets ---------------------------------------------------------------------------


def test_discounted_returns_example():
    np.testing.assert_allclose(discounted_returns([-1, -1, 10], 0.99), [7.811, 8.9, 10.0], atol=1e-12)
    assert discounted_returns([], 0.9).shape == (0,)


def test_plan_return_matches_summation():
    for n in range(0, 8):
        rewards = [-1.0] * (n - 1) + [10.0] if n else []
        expected = discounted_returns(rewards, 0.97)[0] if n else 0.0
        assert plan_return(n, 10.0, -1.0, 0.97) == pytest.approx(expected, abs=1e-12)


# --- generate_il_dataset ------------------------------------------------------------------


def test_pure_expert_episodes_are_optimal_plans(tiny):
    env = tiny_env(tiny)
    data = generate_il_dataset(env, 12, p_random=0.0, seed=4)
    assert data.summary["successes"] == 12
    for e in range(12):
        rows = np.flatnonzero(data.episode == e)
        start = env.sample_state(derive_seed(4, f"il/reset/{e}"))
        steps = [env.actions[a] for a in data.actions[rows]]
        task = env.task_template.bind(tiny, start)
        assert validate_plan(tiny, start, task, steps)
        assert len(steps) == plan(tiny, start, task).cost
        # with no detours the plan return and the episode return agree
        np.testing.assert_allclose(data.q_targets[rows], discounted_returns(data.rewards[rows], 0.99))


def test_random_actions_uniform_over_applicable(tiny):
    env = tiny_env(tiny, "easy")
    data = generate_il_dataset(env, 300, p_random=1.0, seed=1, max_steps=8)
    app = data.applicable
    expected = (app / app.sum(axis=1, keepdims=True)).sum(axis=0)
    observed = np.bincount(data.actions, minlength=env.n_actions)
    assert not observed[~app.any(axis=0)].any()
    keep = expected > 0
    assert stats.chisquare(observed[keep], expected[keep]).pvalue > 0.01
    assert app[np.arange(len(data)), data.actions].all()


def test_all_pool_tries_invalid_actions(tiny):
    env = tiny_env(tiny, "easy")
    data = generate_il_dataset(env, 30, p_random=1.0, seed=1, random_pool="all", max_steps=8)
    assert not data.applicable[np.arange(len(data)), data.actions].all()


def test_plan_targets_are_one_step_lookahead(tiny):
    env = tiny_env(tiny)
    data = generate_il_dataset(env, 40, p_random=0.3, seed=2)
    same = data.episode[1:] == data.episode[:-1]
    k = np.flatnonzero(same & ~data.done[:-1])
    np.testing.assert_allclose(data.q_targets[k], data.rewards[k] + 0.99 * data.values[k + 1], atol=1e-12)
    ends = np.flatnonzero(data.done)
    np.testing.assert_allclose(data.q_targets[ends], data.rewards[ends])


def test_episode_targets_option(tiny):
    env = tiny_env(tiny)
    data = generate_il_dataset(env, 10, p_random=0.3, seed=2, q_targets="episode")
    for e in range(10):
        rows = np.flatnonzero(data.episode == e)
        np.testing.assert_allclose(data.q_targets[rows], discounted_returns(data.rewards[rows], 0.99))
    with pytest.raises(ValueError):
        generate_il_dataset(env, 1, q_targets="mc")


def test_observations_not_planner_states(tiny):
    env = tiny_env(tiny)
    data = generate_il_dataset(env, 3, p_random=0.0, seed=0)
    assert data.obs.shape[1] == env.obs_dim
    assert data.obs.dtype == np.uint8


def test_unsolvable_instances_skipped(tiny):
    task = Task("bad", "tiny", TaskLevel.MEDIUM, "", goal=(("in", "apple", "stool"), ("in", "mug-1", "stool")))
    env = KitchenEnv(tiny, task)
    data = generate_il_dataset(env, 4, seed=0)
    assert len(data) == 0 and data.summary["skipped"] == 4


def test_hard_departures_stored_as_failures(tiny):
    env = tiny_env(tiny, "hard")
    data = generate_il_dataset(env, 60, p_random=0.5, seed=3)
    assert data.summary["violations"] > 0
    # each departure is a terminal row; the demonstration still finishes
    assert int(data.done.sum()) == data.summary["violations"] + data.summary["successes"]
    assert data.summary["successes"] == data.summary["episodes"]


def test_generation_deterministic(tiny):
    a = generate_il_dataset(tiny_env(tiny), 8, seed=9)
    b = generate_il_dataset(tiny_env(tiny), 8, seed=9)
    for k in ("obs", "actions", "rewards", "q_targets", "done"):
        np.testing.assert_array_equal(getattr(a, k), getattr(b, k))


def test_dataset_save_load(tiny, tmp_path):
    data = generate_il_dataset(tiny_env(tiny), 5, seed=1)
    data.save(tmp_path / "d.npz")
    back = ILDataset.load(tmp_path / "d.npz")
    assert back.summary == data.summary
    for k in ("obs", "actions", "q_targets", "applicable", "values", "next_applicable"):
        np.testing.assert_array_equal(getattr(back, k), getattr(data, k))
    assert len(back.episodes_upto(2)) == int(np.sum(data.episode < 2))


# --- il_update ------------------------------------------------------------------------------


def _tab_batch(env, rows, q):
    S, A = env.n_states, env.n_actions
    s, a = np.array([r[0] for r in rows]), np.array([r[1] for r in rows])
    s2 = env.nxt[s, a]
    return ILDataset(
        obs=np.eye(S)[s], actions=a, rewards=env.R[s, a], q_targets=q[s, a],
        next_obs=np.eye(S)[s2], next_applicable=np.ones((len(s), A), bool),
        done=np.zeros(len(s), bool), episode=np.zeros(len(s), np.int32))


def test_exact_fit_is_fixed_point():
    env = TabularEnv.random(np.random.default_rng(0), 4, 3)
    net = TabularSR(4, 3)
    net.params["psi"][...] = np.eye(12)  # gamma 0: psi = phi
    net.params["w"][...] = env.R.ravel()
    batch = _tab_batch(env, [(s, a) for s in range(4) for a in range(3)], env.R)
    before = {k: v.copy() for k, v in net.params.items()}
    losses = il_update(net, batch, 0.0, Optimizer("adam", 1e-3), np.eye(3))
    assert losses == (0.0, 0.0, 0.0)
    for k in before:
        np.testing.assert_array_equal(net.params[k], before[k])


def test_near_fixed_point_with_discount():
    env = TabularEnv.random(np.random.default_rng(1), 5, 2)
    Q = value_iteration(env.P(), env.R, 0.9)
    pi = Q.argmax(axis=1)
    S, A = 5, 2
    Ppi = np.zeros((S * A, S * A))
    for s in range(S):
        for a in range(A):
            s2 = env.nxt[s, a]
            Ppi[s * A + a, s2 * A + pi[s2]] = 1.0
    net = TabularSR(S, A)
    net.params["psi"][...] = np.linalg.solve(np.eye(S * A) - 0.9 * Ppi, np.eye(S * A))
    net.params["w"][...] = env.R.ravel()
    batch = _tab_batch(env, [(s, a) for s in range(S) for a in range(A)], Q)
    losses = il_update(net, batch, 0.9, Optimizer("sgd", 0.1), np.eye(A))
    assert max(losses) < 1e-20


def test_single_sample_hand_losses():
    net = TabularSR(1, 1)
    net.params["psi"][...] = 2.0
    net.params["w"][...] = 0.5
    batch = ILDataset(obs=np.ones((1, 1)), actions=np.zeros(1, int), rewards=np.array([1.0]),
                      q_targets=np.array([3.0]), next_obs=np.ones((1, 1)),
                      next_applicable=np.ones((1, 1), bool), done=np.array([True]),
                      episode=np.zeros(1, np.int32))
    L_r, L_Q, L_SR = il_update(net, batch, 0.9, Optimizer("sgd", 0.0), np.ones((1, 1)))
    # r = phi.w = 0.5, Q = psi.w = 1.0, terminal SR target = phi = 1
    assert (L_r, L_Q, L_SR) == (0.25, 4.0, 1.0)


def test_invalid_action_targets():
    app = np.array([[True, False, False], [True, True, True], [False, True, True]])
    batch = SimpleNamespace(applicable=app, values=np.array([2.0, 3.0, -1.0]))
    rows, acts, r, q = invalid_action_targets(batch, np.random.default_rng(0), -5.0, 0.5)
    assert rows.tolist() == [0, 2]
    assert not app[rows, acts].any()
    np.testing.assert_allclose(r, -5.0)
    np.testing.assert_allclose(q, [-4.0, -5.5])
    all_ok = SimpleNamespace(applicable=np.ones((2, 3), bool), values=np.zeros(2))
    assert invalid_action_targets(all_ok, np.random.default_rng(0), -5.0, 0.5) is None


def test_il_train_reduces_losses(tiny):
    env = tiny_env(tiny, "easy")
    data = generate_il_dataset(env, 40, seed=0)
    cfg = TrainConfig(lr=1e-3, model=SRConfig(hidden=32, embed=32, feature_dim=16))
    net = SRNetwork(4 * env.frame_dim, env.encoder.internal_dim, env.action_features.shape[1], cfg.model)
    seen = []
    il_train(net, data, cfg, env.action_features, updates=400, callback=lambda k, l: seen.append(l))
    first = np.mean(seen[:20], axis=0)
    last = np.mean(seen[-20:], axis=0)
    assert last[0] < first[0] and last[1] < first[1]


def test_il_train_rejects_empty():
    empty = ILDataset(*(np.zeros((0, 1)),) * 8)
    with pytest.raises(ValueError):
        il_train(TabularSR(1, 1), empty, TrainConfig(), np.ones((1, 1)))


# --- replay, targets, schedule ---------------------------------------------------------------


def test_buffer_fifo():
    buf = ReplayBuffer(5)
    for k in range(8):
        buf.push(np.array([k]), k, float(k), np.array([k + 1]), False)
    assert len(buf) == 5
    assert buf.contents()["action"].tolist() == [3, 4, 5, 6, 7]


def test_buffer_sample_uniform():
    buf = ReplayBuffer(4)
    for k in range(4):
        buf.push(np.array([k]), k, 0.0, np.array([k]), False)
    draws = buf.sample(8000, np.random.default_rng(0))["action"]
    assert stats.chisquare(np.bincount(draws, minlength=4)).pvalue > 0.01
    with pytest.raises(ValueError):
        ReplayBuffer(0)
    with pytest.raises(ValueError):
        ReplayBuffer(3).sample(1, np.random.default_rng(0))


def test_soft_update_examples():
    online, target = TabularSR(1, 2), TabularSR(1, 2)
    online.params["w"][...] = 1.0
    soft_update(target, online, 0.1)
    np.testing.assert_allclose(target.params["w"], 0.1)
    soft_update(target, online, 1.0)
    np.testing.assert_array_equal(target.params["w"], online.params["w"])
    with pytest.raises(ValueError):
        soft_update(target, online, 1.5)


def test_soft_update_geometric():
    online, target = TabularSR(1, 1), TabularSR(1, 1)
    online.params["w"][...] = 1.0
    for k in range(1, 30):
        soft_update(target, online, 0.1)
        assert abs(1.0 - target.params["w"][0] - 0.9**k) < 1e-12


def test_soft_update_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        soft_update(TabularSR(1, 2), TabularSR(2, 2), 0.5)


def test_epsilon_schedule():
    assert epsilon_schedule(0, 100) == 1.0
    assert epsilon_schedule(100, 100) == pytest.approx(0.1)
    assert epsilon_schedule(50, 100) == pytest.approx(0.55)
    assert epsilon_schedule(500, 100) == pytest.approx(0.1)


# --- rl_update / rl_train ----------------------------------------------------------------------


def _rl_batch(s, a, r, s2, terminal, S):
    return {"obs": np.eye(S)[s], "action": np.asarray(a), "reward": np.asarray(r, float),
            "next_obs": np.eye(S)[s2], "terminal": np.asarray(terminal)}


def test_terminal_target_is_phi():
    net = TabularSR(2, 2, init=0.3)
    tgt = net.copy()
    batch = _rl_batch([0, 1], [1, 0], [0.0, 0.0], [1, 0], [True, True], 2)
    rl_update(net, tgt, batch, 0.9, GroupSGD({"w": 0.0, "psi": 2 * 4 / 2}), np.eye(2), "sr")
    np.testing.assert_allclose(net.params["psi"][1], np.eye(4)[1])
    np.testing.assert_allclose(net.params["psi"][2], np.eye(4)[2])


def test_gamma_zero_target_is_phi():
    net = TabularSR(2, 2, init=0.7)
    tgt = net.copy()
    batch = _rl_batch([0, 1], [0, 1], [0.0, 0.0], [1, 0], [False, False], 2)
    rl_update(net, tgt, batch, 0.0, GroupSGD({"w": 0.0, "psi": 2 * 4 / 2}), np.eye(2), "sr")
    np.testing.assert_allclose(net.params["psi"][0], np.eye(4)[0])
    np.testing.assert_allclose(net.params["psi"][3], np.eye(4)[3])


def test_target_uses_target_network():
    net, tgt = TabularSR(2, 1), TabularSR(2, 1)
    tgt.params["psi"][1] = [0.0, 5.0]
    batch = _rl_batch([0], [0], [0.0], [1], [False], 2)
    rl_update(net, tgt, batch, 0.5, GroupSGD({"w": 0.0, "psi": 2 / 2}), np.eye(1), "sr")
    np.testing.assert_allclose(net.params["psi"][0], [1.0, 2.5])


def test_reward_regression_recovers_table():
    env = TabularEnv.random(np.random.default_rng(3), 4, 3)
    net = TabularSR(4, 3)
    tgt = net.copy()
    pairs = [(s, a) for s in range(4) for a in range(3)]
    s, a = map(np.array, zip(*pairs))
    batch = _rl_batch(s, a, env.R[s, a], env.nxt[s, a], np.zeros(12, bool), 4)
    opt = Optimizer("sgd", 3.0)
    for _ in range(200):
        rl_update(net, tgt, batch, 0.9, opt, np.eye(3), "reward")
    np.testing.assert_allclose(net.params["w"].reshape(4, 3), env.R, atol=1e-6)
    assert not net.params["psi"].any()


def _train_tabular(env, episodes, seed, gamma=0.9, step=0.5):
    S, A = env.n_states, env.n_actions
    net = TabularSR(S, A)
    # one sample per update: duplicates in a larger batch would stack their steps
    cfg = TrainConfig(gamma=gamma, batch_size=1, buffer_size=5000, tau=1.0, rl_max_steps=30,
                      eps_end=0.5)
    opt = GroupSGD({"w": step / 2, "psi": step * S * A / 2})
    rl_train(net, env, cfg, episodes=episodes, seed=seed, opt=opt)
    return net


def test_two_state_chain_matches_value_iteration():
    env = TabularEnv(nxt=[[0, 1], [0, 1]], R=[[0.0, 0.0], [1.0, 0.5]])
    net = _train_tabular(env, 150, 0)
    Q = net.q_all(np.eye(2), np.eye(2))
    np.testing.assert_allclose(Q, value_iteration(env.P(), env.R, 0.9), atol=1e-3)


def test_rl_train_on_kitchen_is_deterministic(tiny):
    cfg = TrainConfig(rl_episodes=3, rl_max_steps=20, buffer_size=64, lr=1e-3,
                      model=SRConfig(hidden=16, embed=16, feature_dim=8))

    def run():
        env = tiny_env(tiny, "easy")
        net = SRNetwork(4 * env.frame_dim, env.encoder.internal_dim, env.action_features.shape[1], cfg.model)
        return rl_train(net, env, cfg, seed=5)

    (n1, m1), (n2, m2) = run(), run()
    assert [m.csv() for m in m1] == [m.csv() for m in m2]
    assert len(m1) == 3
    for k in n1.params:
        np.testing.assert_array_equal(n1.params[k], n2.params[k])
