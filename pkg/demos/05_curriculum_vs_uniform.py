"""
Curriculum against uniform goals
================================

A shortened version of the comparison the test suite runs at full length:
one seed of each method, with goal-difficulty snapshots for the curriculum.
Pass a step budget to run longer, e.g. ``python 05_curriculum_vs_uniform.py 200000``.
"""

import sys
import time

from ddf_curriculum.config import ExperimentConfig
from ddf_curriculum.harness import TrainingRun, steps_to_threshold

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 40_000
config = ExperimentConfig().with_overrides(experiment={"total_env_steps": steps, "eval_every": 2000})

for method in ("uniform_baseline", "curriculum"):
    start = time.time()
    run = TrainingRun(config, seed=0, method=method)
    metrics = run.run(snapshot_every=steps // 5, snapshot_goals=100)
    curve = metrics.success
    print(f"\n{method}: {time.time() - start:.0f}s, final success {curve[-1]:.2f}")
    print("  success every 10k steps:", " ".join(f"{s:.2f}" for s in curve[4::5]))
    for t in (0.5, 0.8):
        print(f"  steps to sustained {t}: {steps_to_threshold(metrics.env_steps, curve, t)}")
    print("  goal sources:", metrics.source_histogram())
    if metrics.snapshots:
        print("  mean BFS distance of proposed goals by snapshot:",
              [(s.env_steps, round(s.mean_distance, 1)) for s in metrics.snapshots])
    print("  counters:", run.counters)
