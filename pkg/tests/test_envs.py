import numpy as np
import pytest
from scipy import stats

from ddf_curriculum.core import sparse_reward
from ddf_curriculum.envs import (DOWN, LEFT, RIGHT, UP, EpisodeFinishedError, GridNavEnv, InvalidActionError,
                                 InvalidCellError, InvalidGoalError, PointReachEnv, make_env)

from conftest import relaxation_distances

WALLS_20 = ([(5, y) for y in range(10) if y != 4] + [(x, 7) for x in range(10) if x not in (2, 5, 8)]
            + [(1, 1), (2, 1), (3, 1), (7, 2)])


def test_reset_returns_fixed_start():
    env = GridNavEnv(10, 10, start=(2, 3))
    s = env.reset(None, (5, 5))
    assert np.allclose(s, [2 / 9, 3 / 9])
    assert env.t == 0
    assert np.array_equal(env.desired_goal, [5, 5])

    pr = PointReachEnv()
    assert np.array_equal(pr.reset(None, (0.9, 0.9)), pr.start)


def test_reset_rejects_wall_and_out_of_bounds_goals():
    env = GridNavEnv(10, 10, walls=[(3, 3)])
    for bad in [(3, 3), (10, 0), (-1, 2), (1.5, 2)]:
        with pytest.raises(InvalidGoalError):
            env.reset(None, bad)
    with pytest.raises(InvalidGoalError):
        PointReachEnv().reset(None, (1.2, 0.5))


def test_grid_step_moves_and_blocks():
    env = GridNavEnv(10, 10, start=(2, 2))
    env.reset(None, (7, 7))
    s, r, done = env.step(RIGHT)
    assert env.decode(s) == (3, 2) and r == -1.0 and not done

    env = GridNavEnv(10, 10, walls=[(3, 2)], start=(2, 2))
    env.reset(None, (7, 7))
    s, r, done = env.step(RIGHT)
    assert env.decode(s) == (2, 2) and r == -1.0
    # grid edge is also a no-op
    env = GridNavEnv(3, 3, start=(0, 0))
    env.reset(None, (2, 2))
    assert env.decode(env.step(UP)[0]) == (0, 0)
    assert env.decode(env.step(LEFT)[0]) == (0, 0)
    assert env.decode(env.step(DOWN)[0]) == (0, 1)


def test_grid_success_terminates_and_further_steps_fail():
    env = GridNavEnv(5, 1, start=(0, 0))
    env.reset(None, (1, 0))
    _, r, done = env.step(RIGHT)
    assert r == 0.0 and done
    with pytest.raises(EpisodeFinishedError):
        env.step(RIGHT)


def test_grid_horizon_terminates():
    env = GridNavEnv(5, 5, start=(0, 0), horizon=3)
    env.reset(None, (4, 4))
    dones = [env.step(UP)[2] for _ in range(3)]
    assert dones == [False, False, True]
    with pytest.raises(EpisodeFinishedError):
        env.step(UP)


def test_grid_invalid_actions():
    env = GridNavEnv(5, 5)
    env.reset(None, (4, 4))
    for bad in (4, -1, 1.5, "x", [0, 1]):
        with pytest.raises(InvalidActionError):
            env.step(bad)


def test_point_reach_step_example():
    env = PointReachEnv(max_step=0.03, epsilon=0.05)
    env.reset(None, (0.53, 0.5))
    env.agent_pos = np.array([0.5, 0.5])
    s, r, done = env.step(np.array([0.02, 0.0]))
    # |0.52 - 0.53| = 0.01 < 0.05
    assert np.allclose(s, [0.52, 0.5]) and r == 0.0 and done


def test_point_reach_clips_action_and_position():
    env = PointReachEnv(max_step=0.03)
    env.reset(None, (0.9, 0.9))
    env.agent_pos = np.array([0.99, 0.5])
    s, _, _ = env.step(np.array([1.0, -1.0]))
    assert np.allclose(s, [1.0, 0.47])
    with pytest.raises(InvalidActionError):
        env.step(np.array([np.nan, 0.0]))
    with pytest.raises(InvalidActionError):
        env.step(np.array([0.0, 0.0, 0.0]))


def test_achieved_goal_projection():
    env = GridNavEnv(10, 10, start=(1, 1))
    assert np.array_equal(env.achieved_goal(env.encode((4, 7))), [4, 7])
    assert np.array_equal(env.achieved_goal(env.start_state()), [1, 1])
    assert np.array_equal(PointReachEnv().achieved_goal([0.3, 0.8]), [0.3, 0.8])


def test_grid_reward_is_exact_cell_match():
    env = GridNavEnv(20, 20)
    cells = env.free_cells
    for a in cells[::17]:
        for b in cells[::13]:
            r = sparse_reward(np.array(a, float), np.array(b, float), env.spec.epsilon)
            assert (r == 0.0) == (a == b)


def test_oracle_distance_examples():
    env = GridNavEnv(10, 10)
    assert env.oracle_distance((0, 0), (0, 0)) == 0
    assert env.oracle_distance((0, 0), (3, 0)) == 3
    # A wall at x=5 with a single gap at y=9 forces a detour.
    walls = [(5, y) for y in range(9)]
    env = GridNavEnv(10, 10, walls=walls)
    expected = relaxation_distances(10, 10, walls, (0, 0))[0, 9]
    assert env.oracle_distance((0, 0), (9, 0)) == expected == 27
    with pytest.raises(InvalidCellError):
        env.oracle_distance((5, 0), (0, 0))


def test_oracle_distance_matches_relaxation_on_random_grids():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 100:
        w, h = rng.integers(2, 12, size=2)
        n_walls = rng.integers(0, w * h // 3 + 1)
        walls = {(int(rng.integers(w)), int(rng.integers(h))) for _ in range(n_walls)}
        free = [(x, y) for y in range(h) for x in range(w) if (x, y) not in walls]
        if len(free) < 2:
            continue
        start = free[rng.integers(len(free))]
        try:
            env = GridNavEnv(w, h, walls, start)
        except ValueError:
            continue  # disconnected layout
        a = free[rng.integers(len(free))]
        b = free[rng.integers(len(free))]
        oracle = relaxation_distances(w, h, walls, a)
        assert env.oracle_distance(a, b) == oracle[b[1], b[0]]
        assert env.oracle_distance(a, b) == env.oracle_distance(b, a)
        checked += 1


def test_uniform_goals_over_free_cells_chi_square():
    env = GridNavEnv(10, 10, WALLS_20, start=(0, 0))
    assert len(env.free_cells) == 80
    rng = np.random.default_rng(1)
    counts = {}
    for _ in range(100_000):
        g = tuple(env.sample_uniform_goal(rng).astype(int))
        counts[g] = counts.get(g, 0) + 1
    assert set(counts) == set(env.free_cells)
    _, p = stats.chisquare(list(counts.values()))
    assert p > 0.001


def test_uniform_goals_two_cell_grid():
    env = GridNavEnv(1, 2)
    rng = np.random.default_rng(2)
    ys = [env.sample_uniform_goal(rng)[1] for _ in range(10_000)]
    assert abs(np.mean(ys) - 0.5) < 0.02


def test_point_reach_uniform_goal_marginals():
    env = PointReachEnv()
    rng = np.random.default_rng(3)
    goals = np.array([env.sample_uniform_goal(rng) for _ in range(5000)])
    for d in range(2):
        assert stats.kstest(goals[:, d], "uniform").pvalue > 0.001


def test_grid_rollouts_never_exceed_horizon_and_are_deterministic():
    env = GridNavEnv.two_room()
    rng = np.random.default_rng(4)
    for _ in range(20):
        goal = env.sample_uniform_goal(rng)
        actions = rng.integers(4, size=200)
        trajs = []
        for _ in range(2):
            env.reset(None, goal)
            traj, done, steps = [], False, 0
            while not done:
                s, r, done = env.step(actions[steps])
                traj.append((tuple(s), r))
                steps += 1
            assert steps <= env.spec.horizon
            trajs.append(traj)
        assert trajs[0] == trajs[1]


def test_map_file_round_trip(tmp_path):
    text = "#####\n#S..#\n#.#.#\n#...#\n#####\n"
    path = tmp_path / "room.map"
    path.write_text(text)
    env = GridNavEnv.load_map(path, horizon=10)
    assert (env.width, env.height, env.start) == (5, 5, (1, 1))
    assert (2, 2) in env.walls and env.spec.horizon == 10
    assert env.to_map() == text
    assert make_env("gridnav", map_path=str(path)).start == (1, 1)


@pytest.mark.parametrize("text", ["", "S.\n...\n", "..\n..\n", "S?\n", "S#\n#.\n", "SS\n"])
def test_bad_maps_rejected(text):
    with pytest.raises(ValueError):
        GridNavEnv.from_map(text)


def test_two_room_default_layout():
    env = GridNavEnv.two_room()
    assert (env.width, env.height, env.spec.horizon) == (20, 20, 50)
    assert len(env.walls) == 19  # one doorway in a 20-cell wall
    far = max(env.free_cells, key=lambda c: env.oracle_distance(env.start, c))
    assert far[0] > 10
