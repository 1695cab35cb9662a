"""Shared domain types, the sparse goal reward, and seeded RNG streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np


class DimensionError(ValueError):
    """Raised when vector lengths or array shapes do not line up."""


class NumericError(ValueError):
    """Raised on non-finite inputs where finite values are required."""


# Named RNG streams. Each consumer draws from its own stream so that turning the
# goal generator on or off leaves every other consumer's draws untouched.
STREAM_ENV = 0
STREAM_AGENT = 1
STREAM_REPLAY = 2
STREAM_DDF = 3
STREAM_GOALGEN = 4
STREAM_EVAL = 5
STREAM_INIT = 6
STREAM_SNAPSHOT = 7


@dataclass(frozen=True)
class RngHandle:
    """A reproducible random stream identified by ``(seed, stream)``.

    The generator is PCG64 seeded through ``SeedSequence(seed, spawn_key=(stream,))``,
    which gives identical draws on every platform numpy supports.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, key: int) -> "RngHandle":
        """Derive an independent handle, e.g. one per snapshot or per retrain."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, key))
        return RngHandle(int(ss.generate_state(2, np.uint64)[0]), self.stream)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return RngHandle(seed, stream).generator()


def as_generator(rng) -> np.random.Generator:
    """Accept either an ``RngHandle`` or a ready ``np.random.Generator``."""
    if isinstance(rng, RngHandle):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngHandle or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a goal-conditioned environment.

    ``action_space`` is ``("discrete", n)`` or ``("continuous", dim)``; for
    continuous actions ``action_bounds`` holds per-dimension ``(low, high)``.
    """

    state_dim: int
    action_space: Tuple[str, int]
    goal_dim: int
    horizon: int
    epsilon: float
    goal_space_bounds: Tuple[Tuple[float, float], ...]
    action_bounds: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.state_dim < 1 or self.goal_dim < 1:
            raise ValueError("state_dim and goal_dim must be positive")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        kind, n = self.action_space
        if kind not in ("discrete", "continuous") or n < 1:
            raise ValueError(f"bad action space {self.action_space!r}")
        if kind == "continuous":
            if self.action_bounds is None or len(self.action_bounds) != n:
                raise ValueError("continuous action space needs per-dim bounds")
            for lo, hi in self.action_bounds:
                if not lo < hi:
                    raise ValueError(f"empty action interval ({lo}, {hi})")
        if len(self.goal_space_bounds) != self.goal_dim:
            raise ValueError("goal_space_bounds must have goal_dim intervals")
        for lo, hi in self.goal_space_bounds:
            if not lo < hi:
                raise ValueError(f"empty goal interval ({lo}, {hi})")

    @property
    def discrete(self) -> bool:
        return self.action_space[0] == "discrete"

    @property
    def action_dim(self) -> int:
        """Width of the stored action vector (1 for discrete actions)."""
        return 1 if self.discrete else self.action_space[1]


def goal_distance(a, b) -> float:
    """Euclidean distance between two goal vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"goal shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def sparse_reward(achieved, desired, epsilon: float) -> float:
    """0.0 when ``achieved`` lies strictly within ``epsilon`` of ``desired``, else -1.0."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return 0.0 if goal_distance(achieved, desired) < epsilon else -1.0


def sparse_reward_batch(achieved: np.ndarray, desired: np.ndarray, epsilon: float) -> np.ndarray:
    """Row-wise :func:`sparse_reward` over ``(n, goal_dim)`` arrays."""
    achieved = np.asarray(achieved, dtype=np.float64)
    desired = np.asarray(desired, dtype=np.float64)
    if achieved.shape != desired.shape:
        raise DimensionError(f"goal shapes differ: {achieved.shape} vs {desired.shape}")
    d = np.sqrt(np.sum((achieved - desired) ** 2, axis=-1))
    return np.where(d < epsilon, 0.0, -1.0)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: object
    next_state: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray
    reward: float
    done: bool


@dataclass
class Episode:
    """One stored trajectory, kept as arrays.

    ``states`` has ``length + 1`` rows (``s_0 .. s_T``); row ``t`` of
    ``achieved_goals`` is the goal realized at ``states[t + 1]``.
    """

    states: np.ndarray
    actions: np.ndarray
    achieved_goals: np.ndarray
    desired_goal: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    start_goal: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return len(self.actions)

    def __len__(self) -> int:
        return self.length

    @property
    def transitions(self) -> List[Transition]:
        return list(self)

    def __iter__(self) -> Iterator[Transition]:
        for t in range(self.length):
            yield Transition(
                state=self.states[t],
                action=self.actions[t],
                next_state=self.states[t + 1],
                achieved_goal=self.achieved_goals[t],
                desired_goal=self.desired_goal,
                reward=float(self.rewards[t]),
                done=bool(self.dones[t]),
            )

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Episode":
        """Pack a transition list, checking chaining and the shared goal."""
        if not transitions:
            raise ValueError("episode must contain at least one transition")
        first = transitions[0]
        for prev, cur in zip(transitions, transitions[1:]):
            if not np.array_equal(prev.next_state, cur.state):
                raise ValueError("next_state of a transition must equal the following state")
            if not np.array_equal(cur.desired_goal, first.desired_goal):
                raise ValueError("all transitions of an episode share one desired goal")
        states = np.array([t.state for t in transitions] + [transitions[-1].next_state], dtype=np.float64)
        actions = np.array([np.atleast_1d(t.action) for t in transitions], dtype=np.float64)
        return cls(
            states=states,
            actions=actions,
            achieved_goals=np.array([t.achieved_goal for t in transitions], dtype=np.float64),
            desired_goal=np.asarray(first.desired_goal, dtype=np.float64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            dones=np.array([t.done for t in transitions], dtype=bool),
        )


@dataclass
class TransitionBatch:
    """A sampled minibatch in column form.

    Iterating yields :class:`Transition` objects; learners read the arrays.
    ``relabeled`` marks rows whose desired goal came from hindsight.
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    achieved_goals: np.ndarray
    desired_goals: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    relabeled: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    # Bookkeeping for tests: in-episode index of each row and of its relabel source.
    time_index: Optional[np.ndarray] = None
    goal_index: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.rewards)

    def __getitem__(self, i: int) -> Transition:
        return Transition(
            state=self.states[i],
            action=self.actions[i],
            next_state=self.next_states[i],
            achieved_goal=self.achieved_goals[i],
            desired_goal=self.desired_goals[i],
            reward=float(self.rewards[i]),
            done=bool(self.dones[i]),
        )

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield self[i]
