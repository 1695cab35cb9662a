"""Curriculum goal generator.

At the start of an episode, draw a batch of visited states from the replay
buffer, classify each one's distance from the initial state with the distance
model, and hand out the achieved goal of a candidate from the furthest bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .core import as_generator
from .ddf import BinSpec, bins_of
from .envs import GoalEnv, GridNavEnv, InvalidGoalError


class GoalSource(str, Enum):
    CURRICULUM = "curriculum"
    UNIFORM_FALLBACK = "uniform_fallback"
    UNIFORM_MIX = "uniform_mix"
    WARMUP = "warmup"
    # goals drawn by the uniform baseline, which never calls the generator
    UNIFORM = "uniform"


@dataclass(frozen=True)
class GoalGenConfig:
    """Knobs for :func:`generate_goal`.

    ``min_candidates`` drives the relaxation rule: while the selected bins hold
    fewer candidates than this, the next bin down is added.
    """

    candidate_batch_size: int = 256
    target_bins: int = 1
    uniform_mix_prob: float = 0.2
    min_buffer_steps: int = 2000
    min_candidates: int = 4

    def __post_init__(self):
        if self.candidate_batch_size < 1:
            raise ValueError("candidate_batch_size must be positive")
        if self.target_bins < 1:
            raise ValueError("target_bins must be >= 1")
        if not 0.0 <= self.uniform_mix_prob <= 1.0:
            raise ValueError("uniform_mix_prob must lie in [0, 1]")
        if self.min_buffer_steps < 0 or self.min_candidates < 0:
            raise ValueError("min_buffer_steps and min_candidates must be non-negative")


@dataclass(frozen=True)
class GoalSample:
    goal: np.ndarray
    source: GoalSource
    predicted_bin: Optional[int] = None
    candidate_count_in_bin: int = 0

    def __post_init__(self):
        if self.source is GoalSource.CURRICULUM and self.predicted_bin is None:
            raise ValueError("curriculum goals carry their predicted bin")


def generate_goal(s0, buffer, model, env: GoalEnv, config: GoalGenConfig, rng) -> GoalSample:
    """Pick the next training goal.

    ``buffer`` needs ``len()`` and ``sample_states``; ``model`` needs
    ``predict_bins(s0, states)`` and a ``bin_spec`` (a trained ``DdfModel``,
    or an oracle stub in tests). ``model=None`` counts as warm-up.
    """
    rng = as_generator(rng)
    if model is None or len(buffer) < config.min_buffer_steps or len(buffer) == 0:
        return GoalSample(env.sample_uniform_goal(rng), GoalSource.WARMUP)
    if rng.random() < config.uniform_mix_prob:
        return GoalSample(env.sample_uniform_goal(rng), GoalSource.UNIFORM_MIX)

    states, goals = buffer.sample_states(config.candidate_batch_size, rng)
    bins = np.asarray(model.predict_bins(s0, states))
    top = int(bins.max())
    lowest = max(1, top - config.target_bins + 1)
    selected = bins >= lowest
    while selected.sum() < config.min_candidates and lowest > 1:
        lowest -= 1
        selected = bins >= lowest
    idx = np.flatnonzero(selected)
    count = len(idx)
    for j in idx[rng.permutation(count)]:
        goal = goals[j]
        if env.is_valid_goal(goal):
            return GoalSample(goal.copy(), GoalSource.CURRICULUM, int(bins[j]), count)
    return GoalSample(env.sample_uniform_goal(rng), GoalSource.UNIFORM_FALLBACK, None, count)


class OracleBinModel:
    """Stand-in distance model that bins exact BFS distances on a grid.

    Has the same ``predict_bins`` surface as ``DdfModel``; distances beyond the
    horizon are clipped into the last bin.
    """

    def __init__(self, env: GridNavEnv, bin_spec: BinSpec):
        self.env = env
        self.bin_spec = bin_spec

    def distances(self, s0, states) -> np.ndarray:
        src = self.env.decode(s0)
        dmap = self.env.distance_map(src)
        cells = [self.env.decode(s) for s in np.atleast_2d(states)]
        return np.array([dmap[y, x] for x, y in cells])

    def predict_bins(self, s0, states) -> np.ndarray:
        d = np.minimum(self.distances(s0, states), self.bin_spec.horizon)
        return bins_of(d, self.bin_spec)


@dataclass
class DifficultyReport:
    n: int
    mean: float
    min: float
    max: float
    distances: np.ndarray
    bin_histogram: Dict[int, int]
    source_histogram: Dict[str, int]


def goal_difficulty_report(goals: Iterable, env: GridNavEnv, s0) -> DifficultyReport:
    """Exact BFS distances from the cell of ``s0`` to each goal.

    ``goals`` may be ``GoalSample`` objects or plain goal vectors.
    """
    src = env.decode(s0)
    dists, bin_hist, src_hist = [], {}, {}
    for g in goals:
        vec = g.goal if isinstance(g, GoalSample) else g
        if isinstance(g, GoalSample):
            src_hist[g.source.value] = src_hist.get(g.source.value, 0) + 1
            if g.predicted_bin is not None:
                bin_hist[g.predicted_bin] = bin_hist.get(g.predicted_bin, 0) + 1
        if not env.is_valid_goal(vec):
            raise InvalidGoalError(f"goal {vec!r} is not a free grid cell")
        d = env.oracle_distance(src, (int(vec[0]), int(vec[1])))
        if d is None:
            raise InvalidGoalError(f"goal {vec!r} is unreachable from {src}")
        dists.append(d)
    arr = np.asarray(dists, dtype=np.float64)
    if arr.size == 0:
        return DifficultyReport(0, float("nan"), float("nan"), float("nan"), arr, bin_hist, src_hist)
    return DifficultyReport(len(arr), float(arr.mean()), float(arr.min()), float(arr.max()), arr,
                            dict(sorted(bin_hist.items())), src_hist)
