"""Training loop, curriculum-vs-baseline suites and CSV outputs.

One run interleaves: goal selection at episode start, an exploratory rollout,
one learner update per environment step on a hindsight-relabeled batch,
periodic from-scratch retraining of the distance classifier, and evaluation on
uniform goals every ``eval_every`` steps. Every random consumer reads its own
seeded stream, so a run is a pure function of ``(config, seed)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import __version__
from .agents import evaluate, make_agent
from .config import METHODS, ExperimentConfig, dump_config, load_config
from .core import (STREAM_AGENT, STREAM_DDF, STREAM_ENV, STREAM_EVAL, STREAM_GOALGEN, STREAM_INIT,
                   STREAM_REPLAY, STREAM_SNAPSHOT, Episode, RngHandle)
from .ddf import (BinSpec, DdfModel, bin_accuracy, build_pair_dataset, make_bin_spec,
                  retrain_schedule_due, train_ddf)
from .envs import GoalEnv, GridNavEnv
from .goalgen import GoalSample, GoalSource, generate_goal, goal_difficulty_report
from .replay import ReplayBuffer, StatePool

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "env_steps", "success_rate", "mean_episode_return", "mean_goal_distance",
    "ddf_holdout_accuracy", "ddf_within_one_accuracy", "episodes",
] + [f"src_{s.value}" for s in GoalSource]

EPISODE_COLUMNS = ["episode", "env_steps", "source", "goal", "predicted_bin",
                   "candidate_count_in_bin", "goal_distance", "length", "return", "success"]

GOAL_COLUMNS = ["env_steps", "index", "source", "goal", "predicted_bin", "candidate_count_in_bin",
                "oracle_distance"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    if isinstance(value, np.ndarray):
        return " ".join(_fmt(float(v)) for v in value)
    return str(value)


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Sequence[Dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


@dataclass
class Snapshot:
    env_steps: int
    goals: List[GoalSample]
    distances: np.ndarray

    @property
    def mean_distance(self) -> float:
        return float(self.distances.mean()) if self.distances.size else float("nan")

    @property
    def curriculum_share(self) -> float:
        if not self.goals:
            return 0.0
        return sum(g.source is GoalSource.CURRICULUM for g in self.goals) / len(self.goals)


@dataclass
class RunMetrics:
    method: str
    seed: int
    rows: List[Dict] = field(default_factory=list)
    episodes: List[Dict] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)
    counters: Dict[str, int] = field(default_factory=dict)

    @property
    def env_steps(self) -> np.ndarray:
        return np.array([r["env_steps"] for r in self.rows])

    @property
    def success(self) -> np.ndarray:
        return np.array([r["success_rate"] for r in self.rows])

    def source_histogram(self) -> Dict[str, int]:
        hist: Dict[str, int] = {}
        for ep in self.episodes:
            hist[ep["source"]] = hist.get(ep["source"], 0) + 1
        return hist


class TrainingRun:
    """State of one ``(config, seed)`` run; ``run()`` drives it to completion."""

    def __init__(self, config: ExperimentConfig, seed: int, method: Optional[str] = None):
        self.config = config
        self.seed = int(seed)
        self.method = method or config.experiment.method
        cfg = config
        self.env: GoalEnv = cfg.env.build()
        spec = self.env.spec
        self.rng = {name: RngHandle(self.seed, stream).generator() for name, stream in (
            ("env", STREAM_ENV), ("agent", STREAM_AGENT), ("replay", STREAM_REPLAY),
            ("ddf", STREAM_DDF), ("eval", STREAM_EVAL))}
        # Goals are keyed by method too: with a shared stream, a fully mixed
        # curriculum run would replay the baseline's goal sequence offset by a draw.
        goal_key = METHODS.index(self.method)
        self.rng["goal"] = RngHandle(self.seed, STREAM_GOALGEN).child(goal_key).generator()
        self.agent = make_agent(spec, self.env.goal_scale, cfg.agent,
                                rng=RngHandle(self.seed, STREAM_INIT).generator())
        self.buffer = ReplayBuffer(cfg.replay.capacity, spec.state_dim, spec.goal_dim, spec.action_dim,
                                   max_episode_length=spec.horizon)
        self.bin_spec: BinSpec = make_bin_spec(spec.horizon, cfg.ddf.num_bins)
        self.ddf: Optional[DdfModel] = None
        self.ddf_accuracy = (float("nan"), float("nan"))
        self.last_trained_at = 0
        self.env_steps = 0
        self.counters = {"ddf_retrains": 0, "ddf_train_steps": 0, "ddf_queries": 0,
                         "goalgen_calls": 0, "agent_updates": 0}
        self.metrics = RunMetrics(self.method, self.seed, counters=self.counters)

    @property
    def curriculum(self) -> bool:
        return self.method == "curriculum"

    # goal selection

    def next_goal(self) -> GoalSample:
        if not self.curriculum:
            return GoalSample(self.env.sample_uniform_goal(self.rng["goal"]), GoalSource.UNIFORM)
        self.counters["goalgen_calls"] += 1
        if self.ddf is not None:
            self.counters["ddf_queries"] += 1
        return generate_goal(self.env.start_state(), self.buffer, self.ddf, self.env,
                             self.config.goalgen, self.rng["goal"])

    def snapshot_goal_distribution(self, n_goals: int, s0=None, include_mix: bool = False) -> Snapshot:
        """Sample ``n_goals`` from the generator without touching training state.

        Draws come from a stream keyed by the current step count. Unless
        ``include_mix``, the uniform-mixing branch is switched off so the sample
        shows what the curriculum itself proposes.
        """
        s0 = self.env.start_state() if s0 is None else np.asarray(s0, dtype=np.float64)
        rng = RngHandle(self.seed, STREAM_SNAPSHOT).child(self.env_steps).generator()
        gg = self.config.goalgen if include_mix else replace(self.config.goalgen, uniform_mix_prob=0.0)
        goals = [generate_goal(s0, self.buffer, self.ddf, self.env, gg, rng) for _ in range(n_goals)]
        if isinstance(self.env, GridNavEnv):
            dist = goal_difficulty_report(goals, self.env, s0).distances
        else:
            dist = np.array([np.linalg.norm(g.goal - self.env.achieved_goal(s0)) for g in goals])
        return Snapshot(self.env_steps, goals, dist)

    # distance model

    def retrain_ddf(self) -> None:
        cfg = self.config.ddf
        rng = self.rng["ddf"]
        episodes = self.buffer.recent_slice(cfg.recent_steps)
        per_episode = max(1, math.ceil(cfg.n_pairs / len(episodes)))
        data = build_pair_dataset(episodes, per_episode, self.bin_spec, rng, balanced=cfg.balanced)
        train, held = data.split(cfg.holdout_fraction, rng)
        model = DdfModel(self.env.spec.state_dim, self.bin_spec, cfg.hidden, rng=rng)
        train_ddf(model, train, cfg.epochs, cfg.batch_size, rng, lr=cfg.lr)
        self.counters["ddf_train_steps"] += cfg.epochs * math.ceil(len(train) / cfg.batch_size)
        self.counters["ddf_retrains"] += 1
        self.ddf_accuracy = bin_accuracy(model, held) if len(held) else (float("nan"), float("nan"))
        self.ddf = model
        self.last_trained_at = self.env_steps
        log.debug("step %d: retrained distance model, holdout accuracy %.3f",
                  self.env_steps, self.ddf_accuracy[0])

    # main loop

    def run(self, snapshot_every: Optional[int] = None, snapshot_goals: Optional[int] = None) -> RunMetrics:
        cfg = self.config
        exp = cfg.experiment
        snapshot_every = exp.snapshot_every if snapshot_every is None else snapshot_every
        snapshot_goals = exp.snapshot_goals if snapshot_goals is None else snapshot_goals
        env, agent, buffer = self.env, self.agent, self.buffer
        spec = env.spec
        total = exp.total_env_steps
        batch = cfg.agent.batch_size
        next_snapshot = 0 if (snapshot_every and self.curriculum) else None
        window = {"returns": [], "distances": [], "sources": {}}

        while self.env_steps < total:
            if next_snapshot is not None and self.env_steps >= next_snapshot:
                self.metrics.snapshots.append(self.snapshot_goal_distribution(snapshot_goals))
                next_snapshot += snapshot_every

            sample = self.next_goal()
            goal = sample.goal
            state = env.reset(self.rng["env"], goal)
            states, actions, achieved, rewards, dones = [state], [], [], [], []
            done = False
            while not done:
                agent.set_progress(self.env_steps / total)
                action = agent.act(state, goal, explore=True, rng=self.rng["agent"])
                state, reward, done = env.step(action)
                states.append(state)
                actions.append(np.atleast_1d(action))
                achieved.append(env.achieved_goal(state))
                rewards.append(reward)
                dones.append(done)
                self.env_steps += 1
                if self.env_steps >= cfg.agent.update_after and len(buffer):
                    agent.update(buffer.sample_her_batch(batch, cfg.her, spec.epsilon, self.rng["replay"]))
                    self.counters["agent_updates"] += 1
                if self.env_steps % exp.eval_every == 0:
                    self._eval_row(window)
                if self.env_steps >= total:
                    break

            episode = Episode(np.array(states), np.array(actions, dtype=np.float64), np.array(achieved),
                              np.asarray(goal, dtype=np.float64), np.array(rewards), np.array(dones, bool))
            buffer.push_episode(episode)
            ret = float(np.sum(rewards))
            dist = env.goal_difficulty(goal)
            window["returns"].append(ret)
            window["distances"].append(dist)
            window["sources"][sample.source.value] = window["sources"].get(sample.source.value, 0) + 1
            self.metrics.episodes.append({
                "episode": len(self.metrics.episodes), "env_steps": self.env_steps,
                "source": sample.source.value, "goal": goal, "predicted_bin": sample.predicted_bin,
                "candidate_count_in_bin": sample.candidate_count_in_bin if sample.predicted_bin else None,
                "goal_distance": dist, "length": episode.length, "return": ret,
                "success": bool(rewards[-1] == 0.0),
            })

            if (self.curriculum and self.env_steps < total
                    and retrain_schedule_due(self.env_steps, cfg.ddf.retrain_interval, self.last_trained_at)):
                self.retrain_ddf()

        if next_snapshot is not None and next_snapshot <= total:
            self.metrics.snapshots.append(self.snapshot_goal_distribution(snapshot_goals))
        return self.metrics

    def _eval_row(self, window: Dict) -> None:
        exp = self.config.experiment
        rng = self.rng["eval"]
        goals = [self.env.sample_uniform_goal(rng) for _ in range(exp.eval_goal_count)]
        success = evaluate(self.agent, self.env, goals)
        row = {
            "env_steps": self.env_steps,
            "success_rate": success,
            "mean_episode_return": float(np.mean(window["returns"])) if window["returns"] else float("nan"),
            "mean_goal_distance": float(np.mean(window["distances"])) if window["distances"] else float("nan"),
            "ddf_holdout_accuracy": self.ddf_accuracy[0],
            "ddf_within_one_accuracy": self.ddf_accuracy[1],
            "episodes": len(window["returns"]),
        }
        for s in GoalSource:
            row[f"src_{s.value}"] = window["sources"].get(s.value, 0)
        self.metrics.rows.append(row)
        log.info("[%s seed %d] step %d success %.2f", self.method, self.seed, self.env_steps, success)
        window["returns"].clear()
        window["distances"].clear()
        window["sources"].clear()

    # outputs

    def save_checkpoint(self, directory: Union[str, Path], pool_size: int = 4096) -> None:
        """Distance model, agent networks, a sample of visited states and run facts."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if self.ddf is not None:
            self.ddf.save(directory / "ddf.bin")
        self.agent.save(directory / "agent")
        rng = RngHandle(self.seed, STREAM_SNAPSHOT).child(2**32 + self.env_steps).generator()
        if len(self.buffer):
            states, goals = self.buffer.sample_states(pool_size, rng)
        else:
            states = np.zeros((0, self.env.spec.state_dim))
            goals = np.zeros((0, self.env.spec.goal_dim))
        np.savez(directory / "pool.npz", states=states, achieved_goals=goals,
                 buffer_steps=np.array(len(self.buffer)))
        cfg = self.config
        if isinstance(self.env, GridNavEnv):
            (directory / "grid.map").write_text(self.env.to_map())
            cfg = cfg.with_overrides(env={"map_path": str((directory / "grid.map").resolve())})
        (directory / "config.ini").write_text(dump_config(cfg))
        (directory / "run.json").write_text(json.dumps(
            {"env_steps": self.env_steps, "seed": self.seed, "method": self.method, "version": __version__},
            sort_keys=True) + "\n")


def run_training(config: ExperimentConfig, seed: int, out_dir: Optional[Union[str, Path]] = None,
                 method: Optional[str] = None) -> RunMetrics:
    """Run one ``(method, seed)`` and optionally write its CSVs and checkpoint."""
    run = TrainingRun(config, seed, method)
    metrics = run.run()
    if out_dir is not None:
        write_run_outputs(run, out_dir)
    return metrics


def write_run_outputs(run: TrainingRun, out_dir: Union[str, Path]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = run.metrics
    tag = f"{m.method}_{m.seed}"
    write_csv(out / f"run_{tag}.csv", METRIC_COLUMNS, m.rows)
    write_csv(out / f"episodes_{tag}.csv", EPISODE_COLUMNS, m.episodes)
    if m.snapshots:
        snap_dir = out / f"snapshots_{tag}"
        snap_dir.mkdir(exist_ok=True)
        for snap in m.snapshots:
            write_goal_csv(snap_dir / f"goals_{snap.env_steps}.csv", snap)
    if run.config.experiment.checkpoint:
        run.save_checkpoint(out / f"checkpoint_{tag}")
    write_manifest(out, run.config)


def write_goal_csv(path: Union[str, Path], snap: Snapshot) -> None:
    rows = [{"env_steps": snap.env_steps, "index": i, "source": g.source.value, "goal": g.goal,
             "predicted_bin": g.predicted_bin, "candidate_count_in_bin": g.candidate_count_in_bin,
             "oracle_distance": float(d)} for i, (g, d) in enumerate(zip(snap.goals, snap.distances))]
    write_csv(path, GOAL_COLUMNS, rows)


def write_manifest(out_dir: Union[str, Path], config: ExperimentConfig) -> None:
    text = f"[artifact]\nname = ddf_curriculum\nversion = {__version__}\n\n" + dump_config(config)
    Path(out_dir, "manifest.ini").write_text(text)


# suites

def steps_to_threshold(env_steps: Sequence[int], success: Sequence[float], threshold: float,
                       window: int = 3) -> float:
    """First eval step from which ``window`` consecutive points are all ``>= threshold``.

    Near the end of the curve the window shrinks to the points that remain.
    Returns ``inf`` when the threshold is never sustained.
    """
    success = np.asarray(success, dtype=np.float64)
    for i in range(len(success)):
        if np.all(success[i:i + window] >= threshold):
            return float(env_steps[i])
    return float("inf")


@dataclass
class SuiteResult:
    runs: Dict[str, List[RunMetrics]]
    aggregate: List[Dict]
    thresholds: List[Dict]

    def median_steps_to(self, method: str, threshold: float) -> float:
        vals = [r["steps"] for r in self.thresholds if r["method"] == method and r["threshold"] == threshold]
        return float(np.median(vals)) if vals else float("nan")


def aggregate_runs(runs: Dict[str, List[RunMetrics]], thresholds: Sequence[float],
                   window: int) -> SuiteResult:
    agg, thr = [], []
    for method, group in runs.items():
        if not group:
            continue
        steps = group[0].env_steps
        curves = np.array([g.success for g in group])
        for j, s in enumerate(steps):
            col = curves[:, j]
            agg.append({"method": method, "env_steps": int(s), "n_seeds": len(group),
                        "median": float(np.median(col)), "mean": float(np.mean(col)),
                        "std": float(np.std(col))})
        for g in group:
            for t in thresholds:
                thr.append({"method": method, "seed": g.seed, "threshold": t,
                            "steps": steps_to_threshold(g.env_steps, g.success, t, window)})
    return SuiteResult(runs, agg, thr)


def write_suite_outputs(result: SuiteResult, out_dir: Union[str, Path], thresholds: Sequence[float]) -> None:
    out = Path(out_dir)
    write_csv(out / "aggregate.csv", ["method", "env_steps", "n_seeds", "median", "mean", "std"],
              result.aggregate)
    rows = [{**r, "steps": "" if math.isinf(r["steps"]) else int(r["steps"])} for r in result.thresholds]
    for method in result.runs:
        for t in thresholds:
            med = result.median_steps_to(method, t)
            rows.append({"method": method, "seed": "median", "threshold": t,
                         "steps": "" if math.isinf(med) or math.isnan(med) else med})
    write_csv(out / "thresholds.csv", ["method", "seed", "threshold", "steps"], rows)


def run_suite(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None,
              methods: Optional[Sequence[str]] = None) -> SuiteResult:
    """Every ``(method, seed)`` pair, then per-point median/mean/std and threshold tables.

    Per-run files are written as each run finishes; if a later run raises, the
    aggregate over the finished runs is still written before re-raising.
    """
    exp = config.experiment
    methods = tuple(methods or exp.methods)
    runs: Dict[str, List[RunMetrics]] = {m: [] for m in methods}
    try:
        for method in methods:
            for seed in exp.seeds:
                run = TrainingRun(config, seed, method)
                runs[method].append(run.run())
                if out_dir is not None:
                    write_run_outputs(run, out_dir)
    finally:
        result = aggregate_runs(runs, exp.thresholds, exp.sustain_window)
        if out_dir is not None:
            write_suite_outputs(result, out_dir, exp.thresholds)
    return result


# checkpoint inspection

def load_checkpoint(directory: Union[str, Path]):
    """Rebuild ``(config, env, ddf or None, StatePool, env_steps, seed)`` from ``save_checkpoint``."""
    directory = Path(directory)
    config = load_config(directory / "config.ini")
    facts = json.loads((directory / "run.json").read_text())
    env_steps, seed = int(facts["env_steps"]), int(facts["seed"])
    env = config.env.build()
    ddf = DdfModel.load(directory / "ddf.bin") if (directory / "ddf.bin").exists() else None
    with np.load(directory / "pool.npz") as data:
        pool = StatePool(data["states"], data["achieved_goals"], buffer_steps=int(data["buffer_steps"]))
    return config, env, ddf, pool, env_steps, seed


def inspect_goals(directory: Union[str, Path], n: int, seed: int = 0,
                  out_dir: Optional[Union[str, Path]] = None) -> Snapshot:
    """Draw ``n`` curriculum goals from a saved checkpoint and write ``goals_<step>.csv``."""
    config, env, ddf, pool, env_steps, _ = load_checkpoint(directory)
    gg = replace(config.goalgen, uniform_mix_prob=0.0)
    rng = RngHandle(seed, STREAM_SNAPSHOT).generator()
    s0 = env.start_state()
    goals = [generate_goal(s0, pool, ddf, env, gg, rng) for _ in range(n)]
    if isinstance(env, GridNavEnv):
        dist = goal_difficulty_report(goals, env, s0).distances
    else:
        dist = np.array([env.goal_difficulty(g.goal) for g in goals])
    snap = Snapshot(env_steps, goals, dist)
    write_goal_csv(Path(out_dir or directory) / f"goals_{env_steps}.csv", snap)
    return snap

