"""
Continuous control: reaching in the unit square
===============================================

The same pieces with a deterministic actor-critic on a point mass. Goals count
as reached within 0.05 of the target.
"""

import numpy as np

from ddf_curriculum.agents import AcAgent, AgentConfig, evaluate
from ddf_curriculum.envs import PointReachEnv, rollout
from ddf_curriculum.replay import HerConfig, ReplayBuffer

env = PointReachEnv()
rng = np.random.default_rng(6)
agent = AcAgent(env.spec, env.goal_scale, AgentConfig(update_after=500), rng=rng)
buffer = ReplayBuffer(50_000, 2, 2, action_dim=2)
eval_goals = [env.sample_uniform_goal(np.random.default_rng(100 + i)) for i in range(50)]

total, steps = 15_000, 0
while steps < total:
    ep = rollout(env, lambda s, g: agent.act(s, g, explore=True, rng=rng), env.sample_uniform_goal(rng))
    buffer.push_episode(ep)
    for _ in range(ep.length):
        steps += 1
        if steps >= agent.config.update_after:
            agent.update(buffer.sample_her_batch(64, HerConfig(), env.spec.epsilon, rng))
        if steps % 3000 == 0:
            print(f"step {steps}: success on 50 uniform goals {evaluate(agent, env, eval_goals):.2f}")

ep = rollout(env, lambda s, g: agent.act(s, g), np.array([0.8, 0.7]))
print("greedy path to (0.8, 0.7):", np.round(ep.states[::5], 2).tolist(), "reached:", ep.rewards[-1] == 0)
