"""Desk-scale goal-conditioned environments.

``GridNavEnv`` is a walled grid with four deterministic moves; ``PointReachEnv``
is a point mass in the unit square with clipped displacements. Both reset to a
fixed start location, so "distance from the initial state" means the same thing
in every episode.

Grid maps can be read from plain text: ``#`` wall, ``.`` free, ``S`` start::

    #####
    #S..#
    #####
"""

from __future__ import annotations

import copy
from collections import deque
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .core import EnvSpec, Episode, as_generator, goal_distance, sparse_reward

Cell = Tuple[int, int]


class InvalidGoalError(ValueError):
    pass


class InvalidCellError(ValueError):
    pass


class InvalidActionError(ValueError):
    pass


class EpisodeFinishedError(RuntimeError):
    pass


# (dx, dy) per action: up, down, left, right. y grows downward as in map files.
MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))
UP, DOWN, LEFT, RIGHT = range(4)


class GoalEnv:
    """Shared episode bookkeeping; subclasses provide the dynamics.

    ``goal_scale`` maps a goal onto the same ``[0, 1]`` scale as states
    (``goal / goal_scale``); learners use it to build network inputs.
    """

    spec: EnvSpec
    goal_scale: np.ndarray

    def __init__(self):
        self._t = 0
        self._done = True
        self._goal: Optional[np.ndarray] = None

    @property
    def t(self) -> int:
        return self._t

    @property
    def desired_goal(self) -> Optional[np.ndarray]:
        return self._goal

    def clone(self) -> "GoalEnv":
        """Independent episode state sharing the static layout."""
        return copy.copy(self)

    def start_state(self) -> np.ndarray:
        raise NotImplementedError

    def achieved_goal(self, state) -> np.ndarray:
        raise NotImplementedError

    def is_valid_goal(self, goal) -> bool:
        raise NotImplementedError

    def sample_uniform_goal(self, rng) -> np.ndarray:
        raise NotImplementedError

    def goal_difficulty(self, goal) -> float:
        """Distance from the start location to ``goal`` under the env's oracle."""
        raise NotImplementedError

    def _begin(self, desired_goal) -> np.ndarray:
        goal = np.asarray(desired_goal, dtype=np.float64)
        if goal.shape != (self.spec.goal_dim,) or not self.is_valid_goal(goal):
            raise InvalidGoalError(f"goal {desired_goal!r} is not valid for this environment")
        self._goal = goal
        self._t = 0
        self._done = False
        return goal

    def _finish_step(self, next_state: np.ndarray) -> Tuple[np.ndarray, float, bool]:
        self._t += 1
        reward = sparse_reward(self.achieved_goal(next_state), self._goal, self.spec.epsilon)
        self._done = reward == 0.0 or self._t >= self.spec.horizon
        return next_state, reward, self._done

    def _check_active(self):
        if self._done:
            raise EpisodeFinishedError("step() called on a finished episode; call reset()")


class GridNavEnv(GoalEnv):
    """Grid navigation with walls; goals are integer cells ``(x, y)``.

    States are the agent cell scaled to ``[0, 1]`` per axis. ``epsilon`` is 0.5 in
    cell units, so success means landing on the goal cell exactly.
    """

    def __init__(self, width: int, height: int, walls: Iterable[Cell] = (), start: Cell = (0, 0),
                 horizon: int = 50):
        super().__init__()
        if width < 1 or height < 1:
            raise ValueError("grid dimensions must be positive")
        self.width = int(width)
        self.height = int(height)
        self.walls = frozenset((int(x), int(y)) for x, y in walls)
        for x, y in self.walls:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"wall {(x, y)} lies outside the grid")
        self.start = (int(start[0]), int(start[1]))
        if not self.in_bounds(self.start) or self.start in self.walls:
            raise ValueError(f"start cell {self.start} must be a free cell inside the grid")
        self.free_cells: List[Cell] = [
            (x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in self.walls
        ]
        self._bfs_cache: Dict[Cell, Dict[Cell, int]] = {}
        reachable = self._bfs(self.start)
        if len(reachable) != len(self.free_cells):
            raise ValueError("every free cell must be reachable from the start cell")
        self._scale = (max(self.width - 1, 1), max(self.height - 1, 1))
        self.goal_scale = np.array(self._scale, dtype=np.float64)
        self.spec = EnvSpec(
            state_dim=2,
            action_space=("discrete", 4),
            goal_dim=2,
            horizon=int(horizon),
            epsilon=0.5,
            goal_space_bounds=((-0.5, self.width - 0.5), (-0.5, self.height - 0.5)),
        )
        self.agent_cell = self.start

    # construction helpers

    @classmethod
    def from_map(cls, text: str, horizon: int = 50) -> "GridNavEnv":
        rows = [line.rstrip("\r") for line in text.strip("\n").split("\n")]
        rows = [r for r in rows if r.strip()]
        if not rows:
            raise ValueError("empty map")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("map rows must all have the same length")
        walls, start = [], None
        for y, row in enumerate(rows):
            for x, ch in enumerate(row):
                if ch == "#":
                    walls.append((x, y))
                elif ch == "S":
                    if start is not None:
                        raise ValueError("map has more than one start cell")
                    start = (x, y)
                elif ch != ".":
                    raise ValueError(f"unknown map character {ch!r} at {(x, y)}")
        if start is None:
            raise ValueError("map has no start cell 'S'")
        return cls(width, len(rows), walls, start, horizon)

    @classmethod
    def load_map(cls, path: Union[str, Path], horizon: int = 50) -> "GridNavEnv":
        return cls.from_map(Path(path).read_text(), horizon)

    @classmethod
    def two_room(cls, width: int = 20, height: int = 20, horizon: int = 50,
                 start: Cell = (2, 2), door_y: Optional[int] = None) -> "GridNavEnv":
        """Two rooms split by a vertical wall with a single doorway."""
        wall_x = width // 2
        door_y = height // 2 if door_y is None else door_y
        walls = [(wall_x, y) for y in range(height) if y != door_y]
        return cls(width, height, walls, start, horizon)

    def to_map(self) -> str:
        lines = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                c = (x, y)
                row.append("#" if c in self.walls else "S" if c == self.start else ".")
            lines.append("".join(row))
        return "\n".join(lines) + "\n"

    # geometry

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.walls

    def encode(self, cell: Cell) -> np.ndarray:
        return np.array([cell[0] / self._scale[0], cell[1] / self._scale[1]])

    def decode(self, state) -> Cell:
        s = np.asarray(state, dtype=np.float64)
        return int(round(s[0] * self._scale[0])), int(round(s[1] * self._scale[1]))

    def _bfs(self, source: Cell) -> Dict[Cell, int]:
        dist = self._bfs_cache.get(source)
        if dist is not None:
            return dist
        dist = {source: 0}
        queue = deque([source])
        while queue:
            x, y = queue.popleft()
            d = dist[(x, y)] + 1
            for dx, dy in MOVES:
                nxt = (x + dx, y + dy)
                if nxt not in dist and self.is_free(nxt):
                    dist[nxt] = d
                    queue.append(nxt)
        self._bfs_cache[source] = dist
        return dist

    def oracle_distance(self, src: Cell, dst: Cell) -> Optional[int]:
        """Shortest-path step count between two free cells, ``None`` if unreachable."""
        src = (int(src[0]), int(src[1]))
        dst = (int(dst[0]), int(dst[1]))
        for c in (src, dst):
            if not self.is_free(c):
                raise InvalidCellError(f"cell {c} is blocked or outside the grid")
        return self._bfs(src).get(dst)

    def distance_map(self, src: Cell) -> np.ndarray:
        """``(height, width)`` array of BFS distances from ``src``; -1 on walls."""
        out = np.full((self.height, self.width), -1, dtype=np.int64)
        for (x, y), d in self._bfs(src).items():
            out[y, x] = d
        return out

    # GoalEnv interface

    def start_state(self) -> np.ndarray:
        return self.encode(self.start)

    def achieved_goal(self, state) -> np.ndarray:
        return np.array(self.decode(state), dtype=np.float64)

    def is_valid_goal(self, goal) -> bool:
        g = np.asarray(goal, dtype=np.float64)
        if g.shape != (2,) or not np.all(np.isfinite(g)) or not np.all(g == np.round(g)):
            return False
        return self.is_free((int(g[0]), int(g[1])))

    def sample_uniform_goal(self, rng) -> np.ndarray:
        rng = as_generator(rng)
        return np.array(self.free_cells[int(rng.integers(len(self.free_cells)))], dtype=np.float64)

    def goal_difficulty(self, goal) -> float:
        return float(self.oracle_distance(self.start, (int(goal[0]), int(goal[1]))))

    def reset(self, rng=None, desired_goal=None) -> np.ndarray:
        """Put the agent on the start cell and store ``desired_goal``.

        ``rng`` is accepted for interface symmetry; the start is fixed.
        """
        if desired_goal is None:
            raise InvalidGoalError("reset() needs a desired goal")
        self._begin(desired_goal)
        self.agent_cell = self.start
        return self.encode(self.agent_cell)

    def step(self, action) -> Tuple[np.ndarray, float, bool]:
        self._check_active()
        try:
            a = int(np.asarray(action).reshape(()))
        except (TypeError, ValueError):
            raise InvalidActionError(f"action {action!r} is not a single integer") from None
        if not 0 <= a < 4 or a != np.asarray(action).reshape(()):
            raise InvalidActionError(f"action {action!r} outside {{0, 1, 2, 3}}")
        dx, dy = MOVES[a]
        nxt = (self.agent_cell[0] + dx, self.agent_cell[1] + dy)
        if self.is_free(nxt):
            self.agent_cell = nxt
        return self._finish_step(self.encode(self.agent_cell))


class PointReachEnv(GoalEnv):
    """A point in ``[0, 1]^2`` moved by per-step displacements.

    Actions are displacement vectors; each component is clipped to
    ``[-max_step, max_step]`` and the position is clipped to the arena.
    """

    def __init__(self, max_step: float = 0.03, horizon: int = 50, epsilon: float = 0.05,
                 start: Tuple[float, float] = (0.1, 0.1)):
        super().__init__()
        if max_step <= 0:
            raise ValueError("max_step must be positive")
        self.max_step = float(max_step)
        self.start = np.clip(np.asarray(start, dtype=np.float64), 0.0, 1.0)
        self.spec = EnvSpec(
            state_dim=2,
            action_space=("continuous", 2),
            goal_dim=2,
            horizon=int(horizon),
            epsilon=float(epsilon),
            goal_space_bounds=((0.0, 1.0), (0.0, 1.0)),
            action_bounds=((-self.max_step, self.max_step),) * 2,
        )
        self.agent_pos = self.start.copy()
        self.goal_scale = np.ones(2)

    def start_state(self) -> np.ndarray:
        return self.start.copy()

    def achieved_goal(self, state) -> np.ndarray:
        return np.array(state, dtype=np.float64)

    def is_valid_goal(self, goal) -> bool:
        g = np.asarray(goal, dtype=np.float64)
        return g.shape == (2,) and bool(np.all(np.isfinite(g))) and bool(np.all((g >= 0) & (g <= 1)))

    def sample_uniform_goal(self, rng) -> np.ndarray:
        return as_generator(rng).uniform(0.0, 1.0, size=2)

    def goal_difficulty(self, goal) -> float:
        return goal_distance(self.start, goal)

    def reset(self, rng=None, desired_goal=None) -> np.ndarray:
        if desired_goal is None:
            raise InvalidGoalError("reset() needs a desired goal")
        self._begin(desired_goal)
        self.agent_pos = self.start.copy()
        return self.agent_pos.copy()

    def step(self, action) -> Tuple[np.ndarray, float, bool]:
        self._check_active()
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (2,) or not np.all(np.isfinite(a)):
            raise InvalidActionError(f"action must be a finite 2-vector, got {action!r}")
        a = np.clip(a, -self.max_step, self.max_step)
        self.agent_pos = np.clip(self.agent_pos + a, 0.0, 1.0)
        return self._finish_step(self.agent_pos.copy())


def random_action(env: GoalEnv, rng):
    rng = as_generator(rng)
    if env.spec.discrete:
        return int(rng.integers(env.spec.action_space[1]))
    bounds = np.asarray(env.spec.action_bounds, dtype=np.float64)
    return rng.uniform(bounds[:, 0], bounds[:, 1])


def rollout(env: GoalEnv, policy, goal, rng=None) -> Episode:
    """Run one episode toward ``goal``; ``policy(state, goal)`` returns an action.

    With ``policy=None`` actions are drawn uniformly at random from ``rng``.
    """
    if policy is None:
        rng = as_generator(rng)
        policy = lambda _s, _g: random_action(env, rng)
    goal = np.asarray(goal, dtype=np.float64)
    state = env.reset(rng, goal)
    states, actions, achieved, rewards, dones = [state], [], [], [], []
    done = False
    while not done:
        action = policy(state, goal)
        state, reward, done = env.step(action)
        states.append(state)
        actions.append(np.atleast_1d(np.asarray(action, dtype=np.float64)))
        achieved.append(env.achieved_goal(state))
        rewards.append(reward)
        dones.append(done)
    return Episode(np.array(states), np.array(actions), np.array(achieved), goal,
                   np.array(rewards), np.array(dones, dtype=bool))


def random_episodes(env: GoalEnv, n: int, rng) -> List[Episode]:
    """``n`` uniform-random-policy episodes, each toward a fresh uniform goal."""
    rng = as_generator(rng)
    return [rollout(env, None, env.sample_uniform_goal(rng), rng) for _ in range(n)]


def make_env(name: str, **params) -> GoalEnv:
    """Build an environment by name: ``gridnav`` (two-room or map file) or ``pointreach``."""
    if name == "gridnav":
        map_path = params.pop("map_path", "") or ""
        horizon = params.pop("horizon", 50)
        if map_path:
            return GridNavEnv.load_map(map_path, horizon=horizon)
        return GridNavEnv.two_room(horizon=horizon, **params)
    if name == "pointreach":
        return PointReachEnv(**params)
    raise ValueError(f"unknown environment {name!r}")
