"""
The two-room grid and its shortest-path oracle
==============================================

A 20x20 grid split by a wall with one doorway. The agent always starts in the
same cell, so "how far is this goal" has one answer, which the BFS oracle gives.
"""

import numpy as np

from ddf_curriculum.envs import GridNavEnv, rollout

env = GridNavEnv.two_room(20, 20)
print(env.to_map())
print("free cells:", len(env.free_cells), " start:", env.start, " horizon:", env.spec.horizon)

# Distances from the start to every free cell; -1 marks walls.
dmap = env.distance_map(env.start)
print("farthest goal is", dmap.max(), "steps away")
for row in dmap[::2, ::2]:
    print(" ".join(" ##" if d < 0 else f"{d:3d}" for d in row))

# Goals are cells. Reaching one exactly gives reward 0, every other step costs -1.
goal = np.array([15.0, 4.0])
print("\ngoal", goal, "needs", env.goal_difficulty(goal), "steps")

# A random walk rarely gets there within the horizon.
ep = rollout(env, None, goal, np.random.default_rng(0))
print("random walk: length", ep.length, "return", ep.rewards.sum(),
      "end cell", env.decode(ep.states[-1]))

# States are normalised coordinates; decode() maps them back to cells.
print("state at start:", env.start_state(), "->", env.decode(env.start_state()))
