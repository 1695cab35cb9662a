"""Self-guided goal curricula from a learned dynamical distance classifier."""

__version__ = "0.1.0"

from .core import (DimensionError, Episode, EnvSpec, RngHandle, Transition, TransitionBatch,
                   goal_distance, sparse_reward)
from .envs import GridNavEnv, PointReachEnv
from .replay import HerConfig, ReplayBuffer
from .nn import Adam, Mlp, backward_cross_entropy, backward_mse
from .ddf import (BinSpec, DdfModel, bin_of, build_pair_dataset, make_bin_spec, predict_bin,
                  retrain_schedule_due, train_ddf)
from .goalgen import GoalGenConfig, GoalSample, GoalSource, generate_goal, goal_difficulty_report
from .agents import AcAgent, AgentConfig, QAgent, evaluate
from .config import ExperimentConfig, load_config
from .harness import TrainingRun, run_suite, run_training
