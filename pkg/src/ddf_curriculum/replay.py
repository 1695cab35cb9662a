"""Episodic replay buffer with hindsight ("future") goal relabeling.

Transitions live in flat ring arrays sized to the buffer capacity. Whole episodes
are written contiguously (modulo wrap-around) and evicted oldest-first, so an
episode is either fully present or gone. Relabeling happens at sampling time; the
stored trajectories keep their original goals.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple

import numpy as np

from .core import DimensionError, Episode, TransitionBatch, as_generator, sparse_reward_batch


class InvalidEpisodeError(ValueError):
    pass


class EmptyBufferError(RuntimeError):
    pass


@dataclass(frozen=True)
class HerConfig:
    """``k`` relabeled goals per real transition, drawn from later in the episode."""

    k: int = 4
    strategy: str = "future"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.strategy != "future":
            raise ValueError(f"only the 'future' strategy is supported, got {self.strategy!r}")

    @property
    def relabel_prob(self) -> float:
        return self.k / (self.k + 1)


@dataclass(frozen=True)
class _Stored:
    start: int
    length: int


class ReplayBuffer:
    """Ring buffer of whole episodes, capacity counted in transitions."""

    def __init__(self, capacity: int, state_dim: int, goal_dim: int, action_dim: int = 1,
                 max_episode_length: Optional[int] = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.goal_dim = goal_dim
        self.action_dim = action_dim
        self.max_episode_length = max_episode_length
        cap = self.capacity
        self._states = np.zeros((cap, state_dim))
        self._next_states = np.zeros((cap, state_dim))
        self._actions = np.zeros((cap, action_dim))
        self._achieved = np.zeros((cap, goal_dim))
        self._desired = np.zeros((cap, goal_dim))
        self._rewards = np.zeros(cap)
        self._dones = np.zeros(cap, dtype=bool)
        self._t = np.zeros(cap, dtype=np.int64)
        self._ep_start = np.zeros(cap, dtype=np.int64)
        self._ep_len = np.zeros(cap, dtype=np.int64)
        self._episodes: Deque[_Stored] = deque()
        self._ptr = 0
        self._size = 0
        self.total_steps_stored = 0

    def __len__(self) -> int:
        return self._size

    @property
    def num_episodes(self) -> int:
        return len(self._episodes)

    def _validate(self, ep: Episode):
        L = ep.length
        if L < 1:
            raise InvalidEpisodeError("episode must contain at least one transition")
        if L > self.capacity:
            raise InvalidEpisodeError(f"episode of length {L} exceeds buffer capacity {self.capacity}")
        if self.max_episode_length is not None and L > self.max_episode_length:
            raise InvalidEpisodeError(f"episode of length {L} exceeds the horizon {self.max_episode_length}")
        expected = {
            "states": (L + 1, self.state_dim),
            "actions": (L, self.action_dim),
            "achieved_goals": (L, self.goal_dim),
            "desired_goal": (self.goal_dim,),
            "rewards": (L,),
            "dones": (L,),
        }
        for name, shape in expected.items():
            got = np.shape(getattr(ep, name))
            if got != shape:
                raise InvalidEpisodeError(f"episode.{name} has shape {got}, expected {shape}")

    def push_episode(self, episode: Episode) -> None:
        self._validate(episode)
        L = episode.length
        while self._size + L > self.capacity:
            old = self._episodes.popleft()
            self._size -= old.length
        # The free region begins at the write pointer, so writing here never
        # overlaps a live episode.
        idx = (self._ptr + np.arange(L)) % self.capacity
        self._states[idx] = episode.states[:-1]
        self._next_states[idx] = episode.states[1:]
        self._actions[idx] = episode.actions
        self._achieved[idx] = episode.achieved_goals
        self._desired[idx] = episode.desired_goal
        self._rewards[idx] = episode.rewards
        self._dones[idx] = episode.dones
        self._t[idx] = np.arange(L)
        self._ep_start[idx] = self._ptr
        self._ep_len[idx] = L
        self._episodes.append(_Stored(self._ptr, L))
        self._ptr = (self._ptr + L) % self.capacity
        self._size += L
        self.total_steps_stored += L

    def _oldest_slot(self) -> int:
        return self._episodes[0].start if self._episodes else self._ptr

    def _uniform_slots(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise EmptyBufferError("cannot sample from an empty replay buffer")
        u = rng.integers(self._size, size=n)
        return (self._oldest_slot() + u) % self.capacity

    def sample_her_batch(self, batch_size: int, her: HerConfig, epsilon: float, rng) -> TransitionBatch:
        """Draw ``batch_size`` transitions uniformly and relabel a ``k/(k+1)`` share.

        A relabeled row takes as its goal the achieved goal of a uniformly chosen
        transition at the same or a later index of its episode; rewards are
        recomputed for every row against the goal it ends up with.
        """
        rng = as_generator(rng)
        slots = self._uniform_slots(batch_size, rng)
        t = self._t[slots]
        length = self._ep_len[slots]
        relabel = rng.random(batch_size) < her.relabel_prob
        future = t + np.floor(rng.random(batch_size) * (length - t)).astype(np.int64)
        future = np.minimum(future, length - 1)
        goal_slots = (self._ep_start[slots] + future) % self.capacity
        achieved = self._achieved[slots]
        desired = np.where(relabel[:, None], self._achieved[goal_slots], self._desired[slots])
        rewards = sparse_reward_batch(achieved, desired, epsilon)
        dones = np.where(relabel, rewards == 0.0, self._dones[slots])
        return TransitionBatch(
            states=self._states[slots],
            actions=self._actions[slots],
            next_states=self._next_states[slots],
            achieved_goals=achieved,
            desired_goals=desired,
            rewards=rewards,
            dones=dones,
            relabeled=relabel,
            time_index=t,
            goal_index=np.where(relabel, future, -1),
        )

    def sample_states(self, n: int, rng) -> Tuple[np.ndarray, np.ndarray]:
        """``n`` stored next-states (with replacement) and their achieved goals."""
        rng = as_generator(rng)
        if n == 0:
            return np.zeros((0, self.state_dim)), np.zeros((0, self.goal_dim))
        slots = self._uniform_slots(n, rng)
        return self._next_states[slots].copy(), self._achieved[slots].copy()

    def _episode_at(self, stored: _Stored) -> Episode:
        idx = (stored.start + np.arange(stored.length)) % self.capacity
        states = np.concatenate([self._states[idx], self._next_states[idx[-1:]]])
        return Episode(
            states=states,
            actions=self._actions[idx].copy(),
            achieved_goals=self._achieved[idx].copy(),
            desired_goal=self._desired[idx[0]].copy(),
            rewards=self._rewards[idx].copy(),
            dones=self._dones[idx].copy(),
        )

    def episodes(self) -> List[Episode]:
        """All stored episodes, oldest first."""
        return [self._episode_at(s) for s in self._episodes]

    def recent_slice(self, n_steps: int) -> List[Episode]:
        """Newest whole episodes covering at least ``n_steps`` transitions, oldest first.

        Episodes are taken newest-first while the running total is still below
        ``n_steps``; the episode that crosses the boundary is included.
        """
        picked: List[_Stored] = []
        total = 0
        for stored in reversed(self._episodes):
            if total >= n_steps:
                break
            picked.append(stored)
            total += stored.length
        return [self._episode_at(s) for s in reversed(picked)]


class StatePool:
    """A frozen set of (state, achieved goal) rows that mimics ``ReplayBuffer.sample_states``.

    Used to query the goal generator from a checkpoint without the full buffer.
    ``len()`` reports ``buffer_steps`` (the size of the buffer the rows were drawn
    from) so warm-up thresholds behave as they did during the run.
    """

    def __init__(self, states: np.ndarray, achieved_goals: np.ndarray, buffer_steps: Optional[int] = None):
        states = np.asarray(states, dtype=np.float64)
        achieved_goals = np.asarray(achieved_goals, dtype=np.float64)
        if len(states) != len(achieved_goals):
            raise DimensionError("states and achieved_goals must have the same number of rows")
        self.states = states
        self.achieved_goals = achieved_goals
        self.buffer_steps = len(states) if buffer_steps is None else int(buffer_steps)

    def __len__(self) -> int:
        return self.buffer_steps

    def sample_states(self, n: int, rng) -> Tuple[np.ndarray, np.ndarray]:
        rng = as_generator(rng)
        if n == 0:
            return self.states[:0].copy(), self.achieved_goals[:0].copy()
        if not len(self.states):
            raise EmptyBufferError("cannot sample from an empty state pool")
        idx = rng.integers(len(self.states), size=n)
        return self.states[idx].copy(), self.achieved_goals[idx].copy()
