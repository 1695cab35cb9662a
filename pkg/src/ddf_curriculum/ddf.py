"""Dynamical distance classifier.

The step gap between two states of one trajectory is binned on a geometric
scale and a network learns to predict the bin from the concatenated state pair.
Bins are 1-indexed; bin ``k`` holds gaps ``d`` with ``u[k-1] < d <= u[k]`` and
``u[0] = -1``, so a zero gap lands in bin 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import DimensionError, Episode, as_generator
from .nn import Adam, Mlp, backward_cross_entropy


class BinningError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class BinSpec:
    num_bins: int
    horizon: int
    upper_bounds: Tuple[int, ...]

    def __post_init__(self):
        ub = self.upper_bounds
        if len(ub) != self.num_bins:
            raise BinningError("need one upper bound per bin")
        if ub[-1] != self.horizon:
            raise BinningError("the last upper bound must equal the horizon")
        if any(b <= a for a, b in zip(ub, ub[1:])) or ub[0] < 0:
            raise BinningError(f"upper bounds must be strictly increasing, got {ub}")

    @property
    def lower_bounds(self) -> Tuple[int, ...]:
        """Smallest gap in each bin."""
        return (0,) + tuple(u + 1 for u in self.upper_bounds[:-1])


def make_bin_spec(horizon: int, num_bins: int) -> BinSpec:
    """Geometric bin edges ``round(T ** (k / B))`` with the last edge pinned to ``T``."""
    T, B = int(horizon), int(num_bins)
    if B < 1 or T < 1:
        raise BinningError("horizon and num_bins must be positive")
    if T < B:
        raise BinningError(f"cannot split horizon {T} into {B} distinct bins")
    # half-up rounding; Python's round() would send 2.5 to 2
    bounds = [int(math.floor(T ** (k / B) + 0.5)) for k in range(1, B)] + [T]
    if len(set(bounds)) != B:
        raise BinningError(f"geometric edges collide for T={T}, B={B}: {bounds}")
    return BinSpec(B, T, tuple(bounds))


def bin_of(steps: int, spec: BinSpec) -> int:
    if steps < 0 or steps > spec.horizon:
        raise BinningError(f"step gap {steps} outside [0, {spec.horizon}]")
    for k, u in enumerate(spec.upper_bounds, start=1):
        if steps <= u:
            return k
    raise AssertionError("unreachable")


def bins_of(steps, spec: BinSpec) -> np.ndarray:
    """Vectorized :func:`bin_of`."""
    steps = np.asarray(steps)
    if steps.size and (steps.min() < 0 or steps.max() > spec.horizon):
        raise BinningError(f"step gaps must lie in [0, {spec.horizon}]")
    return np.searchsorted(np.asarray(spec.upper_bounds), steps, side="left") + 1


@dataclass
class PairDataset:
    """State pairs ``(s_i, s_j)`` with ``j >= i``, their step gap and 1-based bin label."""

    first: np.ndarray
    second: np.ndarray
    steps: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def inputs(self) -> np.ndarray:
        return np.concatenate([self.first, self.second], axis=1)

    def subset(self, idx) -> "PairDataset":
        return PairDataset(self.first[idx], self.second[idx], self.steps[idx], self.labels[idx])

    def split(self, holdout_fraction: float, rng) -> Tuple["PairDataset", "PairDataset"]:
        rng = as_generator(rng)
        perm = rng.permutation(len(self))
        n_hold = int(round(holdout_fraction * len(self)))
        return self.subset(perm[n_hold:]), self.subset(perm[:n_hold])


def _gap_tables(length: int, spec: BinSpec) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Per feasible bin: candidate gaps and the CDF of picking each.

    A gap ``g`` occurs at ``length + 1 - g`` index pairs, so weighting gaps that way
    and then drawing the start index uniformly picks a uniform pair within the bin.
    """
    tables = []
    for lo, hi in zip(spec.lower_bounds, spec.upper_bounds):
        if lo > length:
            break
        gaps = np.arange(lo, min(hi, length) + 1)
        w = (length + 1 - gaps).astype(np.float64)
        tables.append((gaps, np.cumsum(w) / w.sum()))
    return tables


def build_pair_dataset(episodes: Sequence[Episode], pairs_per_episode: int, spec: BinSpec, rng,
                       balanced: bool = True) -> PairDataset:
    """Sample labelled state pairs from stored trajectories.

    With ``balanced`` the target bin is drawn uniformly among bins the episode can
    realize, then an index pair uniformly among those with a gap in that bin.
    Otherwise ``i <= j`` is drawn uniformly over all index pairs.
    """
    if not episodes:
        raise EmptyDatasetError("no episodes to build pairs from")
    rng = as_generator(rng)
    cache: Dict[int, list] = {}
    firsts, seconds, gaps_out = [], [], []
    for ep in episodes:
        states = ep.states
        L = len(states) - 1
        if L > spec.horizon:
            raise BinningError(f"episode length {L} exceeds the bin horizon {spec.horizon}")
        m = pairs_per_episode
        if balanced:
            tables = cache.get(L)
            if tables is None:
                tables = cache[L] = _gap_tables(L, spec)
            which = rng.integers(len(tables), size=m)
            u = rng.random(m)
            gaps = np.empty(m, dtype=np.int64)
            for k, (cand, cdf) in enumerate(tables):
                sel = which == k
                if sel.any():
                    pos = np.searchsorted(cdf, u[sel], side="right")
                    gaps[sel] = cand[np.minimum(pos, len(cand) - 1)]
            i = np.floor(rng.random(m) * (L - gaps + 1)).astype(np.int64)
        else:
            a = rng.integers(L + 1, size=m)
            b = rng.integers(L + 1, size=m)
            i = np.minimum(a, b)
            gaps = np.abs(a - b)
        firsts.append(states[i])
        seconds.append(states[i + gaps])
        gaps_out.append(gaps)
    steps = np.concatenate(gaps_out)
    return PairDataset(np.concatenate(firsts), np.concatenate(seconds), steps, bins_of(steps, spec))


class DdfModel:
    """Bin classifier over concatenated ``(s_i, s_j)`` pairs."""

    def __init__(self, state_dim: int, bin_spec: BinSpec, hidden: Sequence[int] = (128, 128),
                 rng=None, zero: bool = False, net: Optional[Mlp] = None):
        self.state_dim = int(state_dim)
        self.bin_spec = bin_spec
        if net is None:
            net = Mlp([2 * self.state_dim, *hidden, bin_spec.num_bins], rng=rng, zero=zero)
        if net.in_dim != 2 * self.state_dim or net.out_dim != bin_spec.num_bins:
            raise DimensionError("network shape does not match the state size and bin count")
        self.net = net

    def logits(self, s0, states) -> np.ndarray:
        s0 = np.asarray(s0, dtype=np.float64)
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if s0.shape != (self.state_dim,) or states.shape[1] != self.state_dim:
            raise DimensionError(f"states must have {self.state_dim} entries")
        x = np.concatenate([np.broadcast_to(s0, states.shape), states], axis=1)
        return self.net.forward(x)

    def predict_bins(self, s0, states) -> np.ndarray:
        """1-based bins for ``(s0, s)`` over a batch of ``s``; ties go to the lower bin."""
        return np.argmax(self.logits(s0, states), axis=1) + 1

    def predict_pairs(self, first, second) -> np.ndarray:
        x = np.concatenate([np.asarray(first, float), np.asarray(second, float)], axis=1)
        return np.argmax(self.net.forward(x), axis=1) + 1

    def save(self, path: Union[str, Path]) -> None:
        spec = self.bin_spec
        self.net.save(path, extra={"bin_spec": {"num_bins": spec.num_bins, "horizon": spec.horizon,
                                                "upper_bounds": list(spec.upper_bounds)},
                                   "state_dim": self.state_dim})

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DdfModel":
        net, head = Mlp.load(path)
        b = head["bin_spec"]
        spec = BinSpec(b["num_bins"], b["horizon"], tuple(b["upper_bounds"]))
        return cls(head["state_dim"], spec, net=net)


def predict_bin(model: DdfModel, s0, s) -> Tuple[int, np.ndarray]:
    logits = model.logits(s0, np.asarray(s, dtype=np.float64)[None, :])[0]
    return int(np.argmax(logits)) + 1, logits


def train_ddf(model: DdfModel, dataset: PairDataset, epochs: int = 5, batch_size: int = 64, rng=None,
              lr: float = 1e-3) -> Tuple[DdfModel, float]:
    """Minibatch cross-entropy training in place; returns the model and last epoch's mean loss."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    labels = np.asarray(dataset.labels)
    if labels.min() < 1 or labels.max() > model.bin_spec.num_bins:
        raise BinningError(f"labels must lie in [1, {model.bin_spec.num_bins}]")
    rng = as_generator(rng if rng is not None else np.random.default_rng(0))
    x = dataset.inputs()
    y = labels - 1
    net = model.net
    opt = Adam([net.theta], lr=lr)
    n = len(y)
    epoch_loss = float("nan")
    for _ in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            loss, grads = backward_cross_entropy(net, x[idx], y[idx])
            opt.step([net.flatten_grads(grads)])
            total += loss * len(idx)
        epoch_loss = total / n
    return model, epoch_loss


def bin_accuracy(model: DdfModel, dataset: PairDataset) -> Tuple[float, float]:
    """Exact-bin and within-one-bin accuracy on ``dataset``."""
    pred = model.predict_pairs(dataset.first, dataset.second)
    diff = np.abs(pred - dataset.labels)
    return float(np.mean(diff == 0)), float(np.mean(diff <= 1))


def retrain_schedule_due(total_env_steps: int, interval_steps: int, last_trained_at: int) -> bool:
    if interval_steps < 1:
        raise ValueError("interval_steps must be >= 1")
    return total_env_steps - last_trained_at >= interval_steps
