"""
Picking the next goal
=====================

At each episode start the generator samples visited states from replay, asks
the distance model how far each is from the start, and returns one of the
farthest. Here the model is first an exact oracle, then a learned classifier.
"""

import numpy as np

from ddf_curriculum.ddf import DdfModel, build_pair_dataset, make_bin_spec, train_ddf
from ddf_curriculum.envs import GridNavEnv, random_episodes
from ddf_curriculum.goalgen import GoalGenConfig, OracleBinModel, generate_goal, goal_difficulty_report
from ddf_curriculum.replay import ReplayBuffer

env = GridNavEnv.two_room(20, 20)
spec = make_bin_spec(50, 5)
rng = np.random.default_rng(4)

buffer = ReplayBuffer(20_000, 2, 2)
episodes = random_episodes(env, 300, rng)
for ep in episodes:
    buffer.push_episode(ep)

s0 = env.start_state()
config = GoalGenConfig(uniform_mix_prob=0.0)

oracle = OracleBinModel(env, spec)
goals = [generate_goal(s0, buffer, oracle, env, config, rng) for _ in range(200)]
report = goal_difficulty_report(goals, env, s0)
print(f"oracle model:  mean BFS distance {report.mean:.1f} (min {report.min:g}, max {report.max:g})")
print("  predicted bins", report.bin_histogram, " sources", report.source_histogram)

model = DdfModel(2, spec, rng=rng)
train_ddf(model, build_pair_dataset(episodes, 30, spec, rng), rng=rng)
goals = [generate_goal(s0, buffer, model, env, config, rng) for _ in range(200)]
report = goal_difficulty_report(goals, env, s0)
print(f"learned model: mean BFS distance {report.mean:.1f} (min {report.min:g}, max {report.max:g})")
print("  predicted bins", report.bin_histogram)

uniform = [env.sample_uniform_goal(rng) for _ in range(200)]
print(f"uniform goals: mean BFS distance {goal_difficulty_report(uniform, env, s0).mean:.1f}")

# With uniform_mix_prob=1 the generator is just the uniform sampler.
mixed = [generate_goal(s0, buffer, model, env, GoalGenConfig(uniform_mix_prob=1.0), rng) for _ in range(5)]
print("\nfull mixing:", [(g.source.value, g.goal.tolist()) for g in mixed])
