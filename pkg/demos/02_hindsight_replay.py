"""
Hindsight relabeling
====================

Failed episodes still teach something: replay them as if the goal had been a
state the agent actually reached later on.
"""

import numpy as np

from ddf_curriculum.envs import GridNavEnv, random_episodes
from ddf_curriculum.replay import HerConfig, ReplayBuffer

env = GridNavEnv.two_room(20, 20)
rng = np.random.default_rng(1)

buffer = ReplayBuffer(capacity=5000, state_dim=2, goal_dim=2, max_episode_length=env.spec.horizon)
for ep in random_episodes(env, 150, rng):
    buffer.push_episode(ep)
print(f"{buffer.num_episodes} episodes, {len(buffer)} transitions stored "
      f"({buffer.total_steps_stored} pushed in total; the oldest were evicted)")

# k=4: four relabeled goals for every original one, so 80% of a batch is relabeled.
batch = buffer.sample_her_batch(10_000, HerConfig(k=4), env.spec.epsilon, rng)
print("relabeled share:", batch.relabeled.mean())
print("success rate, original goals: ", (batch.rewards[~batch.relabeled] == 0).mean())
print("success rate, relabeled goals:", (batch.rewards[batch.relabeled] == 0).mean())

# A relabeled goal comes from the same step or later in the same episode.
gap = batch.goal_index[batch.relabeled] - batch.time_index[batch.relabeled]
print("goal offsets: min", gap.min(), "median", int(np.median(gap)), "max", gap.max())

t = batch[int(np.flatnonzero(batch.relabeled & (batch.rewards == 0))[0])]
print("\nexample success after relabeling:", t.achieved_goal, "==", t.desired_goal, "reward", t.reward)
