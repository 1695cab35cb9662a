"""Goal-conditioned off-policy learners.

``QAgent`` regresses per-action values for discrete actions; ``AcAgent`` is a
deterministic actor-critic for continuous actions. Both read network inputs as
``concat(state, goal / goal_scale)`` and bootstrap through a slowly tracking
target copy. A transition stops bootstrapping only when its reward is 0 (the
goal was reached); running out of time does not cut the bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from .core import DimensionError, EnvSpec, TransitionBatch, as_generator
from .envs import GoalEnv, InvalidGoalError
from .nn import Adam, Mlp


class EmptyBatchError(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    hidden: Tuple[int, ...] = (64, 64)
    gamma: float = 0.98
    lr: float = 1e-3
    batch_size: int = 64
    tau: float = 0.005
    # linear anneal of the epsilon-greedy rate over the first fraction of training
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_frac: float = 0.3
    # continuous control: Gaussian noise std as a fraction of the action range
    noise_frac: float = 0.1
    actor_lr: float = 1e-3
    action_l2: float = 0.0
    clip_targets: bool = True
    update_after: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def _targets(rewards: np.ndarray, next_values: np.ndarray, gamma: float, clip: bool) -> np.ndarray:
    y = rewards + gamma * (rewards != 0.0) * next_values
    if clip:
        # with rewards in {0, -1} every return lies in [-1 / (1 - gamma), 0]
        y = np.clip(y, -1.0 / (1.0 - gamma), 0.0)
    return y


class _Base:
    spec: EnvSpec

    def __init__(self, spec: EnvSpec, goal_scale, config: AgentConfig):
        self.spec = spec
        self.config = config
        self.goal_scale = np.asarray(goal_scale, dtype=np.float64)
        if self.goal_scale.shape != (spec.goal_dim,):
            raise DimensionError("goal_scale must have one entry per goal dimension")
        self.progress = 0.0
        self.updates = 0

    def inputs(self, states, goals) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        goals = np.asarray(goals, dtype=np.float64)
        if states.shape[-1] != self.spec.state_dim or goals.shape[-1] != self.spec.goal_dim:
            raise DimensionError("state or goal has the wrong length")
        return np.concatenate([states, goals / self.goal_scale], axis=-1)

    def set_progress(self, fraction: float) -> None:
        """Fraction of the training budget consumed; drives exploration schedules."""
        self.progress = float(fraction)

    def networks(self) -> Dict[str, Mlp]:
        raise NotImplementedError

    def save(self, directory: Union[str, Path]) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, net in self.networks().items():
            net.save(directory / f"{name}.bin")

    def load(self, directory: Union[str, Path]) -> None:
        for name, net in self.networks().items():
            loaded, _ = Mlp.load(Path(directory) / f"{name}.bin")
            net.load_params_from(loaded)


class QAgent(_Base):
    def __init__(self, spec: EnvSpec, goal_scale, config: AgentConfig = AgentConfig(), rng=None):
        if not spec.discrete:
            raise ValueError("QAgent needs a discrete action space")
        super().__init__(spec, goal_scale, config)
        self.n_actions = spec.action_space[1]
        sizes = [spec.state_dim + spec.goal_dim, *config.hidden, self.n_actions]
        self.critic = Mlp(sizes, rng=rng)
        self.target = self.critic.copy()
        self.opt = Adam([self.critic.theta], lr=config.lr)

    def networks(self) -> Dict[str, Mlp]:
        return {"critic": self.critic, "critic_target": self.target}

    @property
    def explore_rate(self) -> float:
        c = self.config
        frac = min(1.0, self.progress / c.eps_anneal_frac) if c.eps_anneal_frac > 0 else 1.0
        return c.eps_start + (c.eps_end - c.eps_start) * frac

    def q_values(self, state, goal) -> np.ndarray:
        return self.critic.forward(self.inputs(state, goal))

    def act(self, state, goal, explore: bool = False, rng=None) -> int:
        if explore:
            rng = as_generator(rng)
            if rng.random() < self.explore_rate:
                return int(rng.integers(self.n_actions))
        return int(np.argmax(self.q_values(state, goal)))

    def act_batch(self, states, goals) -> np.ndarray:
        return np.argmax(self.critic.forward(self.inputs(states, goals)), axis=1)

    def bellman_targets(self, batch: TransitionBatch) -> np.ndarray:
        nxt = self.target.forward(self.inputs(batch.next_states, batch.desired_goals))
        return _targets(batch.rewards, nxt.max(axis=1), self.config.gamma, self.config.clip_targets)

    def update(self, batch: TransitionBatch) -> Dict[str, float]:
        n = len(batch)
        if n == 0:
            raise EmptyBatchError("update() needs at least one transition")
        y = self.bellman_targets(batch)
        q, acts = self.critic.forward_cache(self.inputs(batch.states, batch.desired_goals))
        rows = np.arange(n)
        a = batch.actions.reshape(n, -1)[:, 0].astype(np.int64)
        diff = q[rows, a] - y
        grad = np.zeros_like(q)
        grad[rows, a] = 2.0 * diff / n
        grads, _ = self.critic.backward(acts, grad)
        self.opt.step([self.critic.flatten_grads(grads)])
        self.target.soft_update(self.critic, self.config.tau)
        self.updates += 1
        return {"critic_loss": float(np.mean(diff ** 2))}


class AcAgent(_Base):
    """Deterministic actor with ``tanh`` squashing, critic over ``(state, goal, action)``."""

    def __init__(self, spec: EnvSpec, goal_scale, config: AgentConfig = AgentConfig(), rng=None):
        if spec.discrete:
            raise ValueError("AcAgent needs a continuous action space")
        super().__init__(spec, goal_scale, config)
        gen = as_generator(rng if rng is not None else np.random.default_rng(0))
        bounds = np.asarray(spec.action_bounds, dtype=np.float64)
        self.low, self.high = bounds[:, 0], bounds[:, 1]
        self.center = (self.high + self.low) / 2
        self.half = (self.high - self.low) / 2
        obs = spec.state_dim + spec.goal_dim
        adim = spec.action_dim
        self.actor = Mlp([obs, *config.hidden, adim], rng=gen)
        self.critic = Mlp([obs + adim, *config.hidden, 1], rng=gen)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam([self.actor.theta], lr=config.actor_lr)
        self.critic_opt = Adam([self.critic.theta], lr=config.lr)

    def networks(self) -> Dict[str, Mlp]:
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    def _squash(self, net: Mlp, x: np.ndarray) -> np.ndarray:
        """Normalized action in ``[-1, 1]``."""
        return np.tanh(net.forward(x))

    def _to_env(self, unit: np.ndarray) -> np.ndarray:
        return self.center + self.half * unit

    def _to_unit(self, actions: np.ndarray) -> np.ndarray:
        return (np.asarray(actions, dtype=np.float64) - self.center) / self.half

    def act(self, state, goal, explore: bool = False, rng=None) -> np.ndarray:
        unit = self._squash(self.actor, self.inputs(state, goal))
        if explore:
            rng = as_generator(rng)
            unit = unit + rng.normal(0.0, 2.0 * self.config.noise_frac, size=unit.shape)
            unit = np.clip(unit, -1.0, 1.0)
        return self._to_env(unit)

    def act_batch(self, states, goals) -> np.ndarray:
        return self._to_env(self._squash(self.actor, self.inputs(states, goals)))

    def critic_values(self, states, goals, actions) -> np.ndarray:
        x = np.concatenate([self.inputs(states, goals), self._to_unit(actions)], axis=-1)
        return self.critic.forward(x)[..., 0]

    def bellman_targets(self, batch: TransitionBatch) -> np.ndarray:
        obs2 = self.inputs(batch.next_states, batch.desired_goals)
        a2 = self._squash(self.actor_target, obs2)
        q2 = self.critic_target.forward(np.concatenate([obs2, a2], axis=1))[:, 0]
        return _targets(batch.rewards, q2, self.config.gamma, self.config.clip_targets)

    def update(self, batch: TransitionBatch) -> Dict[str, float]:
        n = len(batch)
        if n == 0:
            raise EmptyBatchError("update() needs at least one transition")
        obs = self.inputs(batch.states, batch.desired_goals)
        y = self.bellman_targets(batch)

        x = np.concatenate([obs, self._to_unit(batch.actions)], axis=1)
        q, acts = self.critic.forward_cache(x)
        diff = q[:, 0] - y
        grads, _ = self.critic.backward(acts, (2.0 * diff / n)[:, None])
        self.critic_opt.step([self.critic.flatten_grads(grads)])

        pre, actor_acts = self.actor.forward_cache(obs)
        unit = np.tanh(pre)
        q_pi, critic_acts = self.critic.forward_cache(np.concatenate([obs, unit], axis=1))
        # maximize Q: loss = -mean(Q) + action_l2 * mean(unit^2)
        _, d_input = self.critic.backward(critic_acts, np.full((n, 1), -1.0 / n))
        d_unit = d_input[:, obs.shape[1]:] + self.config.action_l2 * 2.0 * unit / unit.size
        actor_grads, _ = self.actor.backward(actor_acts, d_unit * (1.0 - unit ** 2))
        self.actor_opt.step([self.actor.flatten_grads(actor_grads)])

        self.actor_target.soft_update(self.actor, self.config.tau)
        self.critic_target.soft_update(self.critic, self.config.tau)
        self.updates += 1
        return {"critic_loss": float(np.mean(diff ** 2)), "actor_loss": float(-q_pi.mean())}


def make_agent(spec: EnvSpec, goal_scale, config: AgentConfig = AgentConfig(), rng=None):
    cls = QAgent if spec.discrete else AcAgent
    return cls(spec, goal_scale, config, rng=rng)


def evaluate(agent, env: GoalEnv, goals: Sequence) -> float:
    """Success rate of greedy rollouts, one per goal, run side by side.

    Neither the agent's parameters nor its optimizer state are touched; ``env``
    itself is left as it was (each rollout uses a clone).
    """
    goals = [np.asarray(g, dtype=np.float64) for g in goals]
    if not goals:
        return float("nan")
    for g in goals:
        if not env.is_valid_goal(g):
            raise InvalidGoalError(f"goal {g!r} is not valid for this environment")
    envs = [env.clone() for _ in goals]
    states = np.array([e.reset(None, g) for e, g in zip(envs, goals)])
    goal_arr = np.array(goals)
    success = np.zeros(len(goals), dtype=bool)
    # A goal equal to the start's own achieved goal needs zero steps.
    for i, g in enumerate(goals):
        if env.spec.epsilon > 0 and np.linalg.norm(env.achieved_goal(states[i]) - g) < env.spec.epsilon:
            success[i] = True
    active = np.flatnonzero(~success)
    for _ in range(env.spec.horizon):
        if active.size == 0:
            break
        actions = agent.act_batch(states[active], goal_arr[active])
        still = []
        for a, i in zip(actions, active):
            nxt, reward, done = envs[i].step(a)
            states[i] = nxt
            if reward == 0.0:
                success[i] = True
            elif not done:
                still.append(i)
        active = np.asarray(still, dtype=np.int64)
    return float(success.mean())
