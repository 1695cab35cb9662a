import numpy as np
import pytest

from ddf_curriculum.agents import AcAgent, AgentConfig, EmptyBatchError, QAgent, evaluate, make_agent
from ddf_curriculum.core import DimensionError, TransitionBatch
from ddf_curriculum.envs import GridNavEnv, InvalidGoalError, PointReachEnv, rollout
from ddf_curriculum.replay import HerConfig, ReplayBuffer


def grid_agent(env, **kw):
    return QAgent(env.spec, env.goal_scale, AgentConfig(**kw), rng=np.random.default_rng(0))


def make_batch(n, rewards, state_dim=2, goal_dim=2, actions=None):
    rewards = np.asarray(rewards, dtype=float)
    return TransitionBatch(
        states=np.zeros((n, state_dim)), actions=np.zeros((n, 1)) if actions is None else actions,
        next_states=np.full((n, state_dim), 0.5), achieved_goals=np.zeros((n, goal_dim)),
        desired_goals=np.ones((n, goal_dim)), rewards=rewards, dones=rewards == 0.0,
        relabeled=np.zeros(n, bool), time_index=np.zeros(n, int), goal_index=np.full(n, -1))


def test_greedy_action_is_argmax():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env)
    last = agent.critic.biases[-1]
    agent.critic.weights[-1][...] = 0.0
    last[...] = [0.1, 0.9, 0.3, 0.2]
    assert agent.act(env.start_state(), [1.0, 1.0], explore=False) == 1


def test_full_exploration_is_uniform():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env, eps_start=1.0, eps_end=1.0)
    rng = np.random.default_rng(1)
    counts = np.bincount([agent.act(env.start_state(), [1.0, 1.0], True, rng) for _ in range(10_000)],
                         minlength=4)
    # each count ~ Binomial(1e4, 0.25): sd ~ 43
    assert np.all(np.abs(counts - 2500) < 4 * 43)


def test_explore_rate_anneals_linearly():
    agent = grid_agent(GridNavEnv(5, 5))
    agent.set_progress(0.0)
    assert agent.explore_rate == 1.0
    agent.set_progress(0.15)
    assert agent.explore_rate == pytest.approx(0.525)
    agent.set_progress(0.9)
    assert agent.explore_rate == pytest.approx(0.05)


def test_continuous_act_deterministic_and_in_bounds():
    env = PointReachEnv()
    agent = AcAgent(env.spec, env.goal_scale, rng=np.random.default_rng(0))
    a = agent.act([0.2, 0.3], [0.9, 0.9])
    assert np.array_equal(a, agent.act([0.2, 0.3], [0.9, 0.9]))
    rng = np.random.default_rng(1)
    noisy = np.array([agent.act(s, [0.5, 0.5], True, rng) for s in rng.random((500, 2))])
    assert np.all(np.abs(noisy) <= env.max_step + 1e-12)
    assert not np.allclose(noisy[0], agent.act(rng.random(2) * 0, [0.5, 0.5]))


def test_dimension_errors():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env)
    with pytest.raises(DimensionError):
        agent.act([0.0, 0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DimensionError):
        agent.q_values([0.0, 0.0], [1.0])


def test_success_targets_are_exactly_zero():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env)
    agent.target.theta[...] = np.random.default_rng(2).normal(size=agent.target.theta.size) * 10
    y = agent.bellman_targets(make_batch(8, np.zeros(8)))
    assert np.array_equal(y, np.zeros(8))
    ac_env = PointReachEnv()
    ac = AcAgent(ac_env.spec, ac_env.goal_scale, rng=np.random.default_rng(0))
    assert np.array_equal(ac.bellman_targets(make_batch(4, np.zeros(4), actions=np.zeros((4, 2)))), np.zeros(4))


def test_zero_discount_targets_equal_rewards():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env, gamma=0.0)
    r = np.array([0.0, -1.0, -1.0, 0.0])
    assert np.array_equal(agent.bellman_targets(make_batch(4, r)), r)


def test_targets_stay_in_return_band():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env)
    agent.target.theta[...] = np.random.default_rng(3).normal(size=agent.target.theta.size) * 100
    y = agent.bellman_targets(make_batch(50, -np.ones(50)))
    assert np.all((y >= -1 / (1 - 0.98) - 1e-9) & (y <= 0))


def test_empty_batch_rejected():
    env = GridNavEnv(5, 5)
    with pytest.raises(EmptyBatchError):
        grid_agent(env).update(make_batch(0, []))


def test_soft_update_rate_one_copies():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env, tau=1.0)
    buf = ReplayBuffer(1000, 2, 2)
    buf.push_episode(rollout(env, None, [4.0, 4.0], np.random.default_rng(0)))
    agent.update(buf.sample_her_batch(16, HerConfig(), env.spec.epsilon, np.random.default_rng(0)))
    assert np.array_equal(agent.target.theta, agent.critic.theta)


def test_make_agent_dispatch():
    assert isinstance(make_agent(GridNavEnv(3, 3).spec, np.ones(2)), QAgent)
    assert isinstance(make_agent(PointReachEnv().spec, np.ones(2)), AcAgent)


def test_evaluate_trivial_goals_and_errors():
    env = GridNavEnv(5, 5, start=(1, 1))
    agent = grid_agent(env)
    assert evaluate(agent, env, [env.achieved_goal(env.start_state())]) == 1.0
    rate = evaluate(agent, env, [np.array([1.0, 2.0])])
    assert 0.0 <= rate <= 1.0
    with pytest.raises(InvalidGoalError):
        evaluate(agent, env, [np.array([7.0, 7.0])])


def test_evaluate_has_no_side_effects():
    env = GridNavEnv(5, 5)
    agent = grid_agent(env)
    before = (agent.critic.flat(), agent.target.flat(), agent.opt.state.t, agent.opt.state.m[0].copy())
    evaluate(agent, env, [env.sample_uniform_goal(np.random.default_rng(i)) for i in range(10)])
    assert np.array_equal(before[0], agent.critic.theta) and np.array_equal(before[1], agent.target.theta)
    assert before[2] == agent.opt.state.t and np.array_equal(before[3], agent.opt.state.m[0])


def train_q(env, steps, seed, **cfg):
    """Plain epsilon-greedy HER training loop on uniform goals."""
    rng = np.random.default_rng(seed)
    agent = QAgent(env.spec, env.goal_scale, AgentConfig(**cfg), rng=rng)
    buf = ReplayBuffer(steps, env.spec.state_dim, env.spec.goal_dim)
    her = HerConfig()
    done_steps = 0
    while done_steps < steps:
        agent.set_progress(done_steps / steps)
        ep = rollout(env, lambda s, g: agent.act(s, g, True, rng), env.sample_uniform_goal(rng), rng)
        buf.push_episode(ep)
        for _ in range(ep.length):
            done_steps += 1
            if done_steps >= agent.config.update_after:
                agent.update(buf.sample_her_batch(agent.config.batch_size, her, env.spec.epsilon, rng))
    return agent


def test_three_cell_corridor_policy_is_optimal():
    env = GridNavEnv(3, 1, start=(0, 0), horizon=10)
    agent = train_q(env, 6000, seed=0, update_after=200)
    # every (start, goal) pair of the 3-cell MDP, not only the training start
    for start in env.free_cells:
        for goal in env.free_cells:
            if goal == start:
                continue
            e = GridNavEnv(3, 1, start=start, horizon=10)
            ep = rollout(e, lambda s, g: agent.act(s, g), np.array(goal, float))
            assert ep.rewards[-1] == 0.0
            assert ep.length == e.oracle_distance(start, goal)


def test_open_grid_reaches_ninety_percent():
    env = GridNavEnv(10, 10, start=(0, 0), horizon=50)
    agent = train_q(env, 15_000, seed=1)
    goals = [env.sample_uniform_goal(np.random.default_rng(100 + i)) for i in range(50)]
    assert evaluate(agent, env, goals) >= 0.9


def test_critic_outputs_mostly_in_return_band():
    env = GridNavEnv(10, 10, start=(0, 0), horizon=50)
    agent = train_q(env, 5000, seed=2)
    rng = np.random.default_rng(3)
    s = np.array([env.encode(env.free_cells[i]) for i in rng.integers(100, size=2000)])
    g = np.array([env.free_cells[i] for i in rng.integers(100, size=2000)], dtype=float)
    q = agent.q_values(s, g)
    assert np.mean((q >= -1 / (1 - 0.98)) & (q <= 0.0)) >= 0.99
