"""Experience containers and the synchronous episode / epoch loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConfigurationError

if TYPE_CHECKING:
    from .envs import Environment
    from .learner import ActorCritic
    from .protocols import Protocol

Neighborhoods = Sequence[Sequence[int]]


@dataclass(frozen=True)
class ExperienceStep:
    history: np.ndarray
    action: int
    env_reward: float
    shaped_reward: float
    next_observation: np.ndarray
    value_estimate: float


@dataclass
class EpisodeRollout:
    """Columnar per-agent record of one episode.

    ``observations`` and ``values`` carry T+1 entries per agent; the last
    is the final (bootstrap) observation and its value estimate.
    """

    observations: np.ndarray  # (N, T+1, Z)
    actions: np.ndarray  # (N, T)
    env_rewards: np.ndarray  # (N, T)
    shaped_rewards: np.ndarray  # (N, T)
    values: np.ndarray  # (N, T+1)
    neighborhoods: list[list[tuple[int, ...]]]  # per step, after the transition
    stats: dict[str, float] = field(default_factory=dict)
    terminal: bool = False

    @property
    def n_agents(self) -> int:
        return self.actions.shape[0]

    @property
    def length(self) -> int:
        return self.actions.shape[1]

    @property
    def final_neighborhoods(self) -> list[tuple[int, ...]]:
        return self.neighborhoods[-1]

    def step(self, agent: int, t: int) -> ExperienceStep:
        return ExperienceStep(
            history=self.observations[agent, t],
            action=int(self.actions[agent, t]),
            env_reward=float(self.env_rewards[agent, t]),
            shaped_reward=float(self.shaped_rewards[agent, t]),
            next_observation=self.observations[agent, t + 1],
            value_estimate=float(self.values[agent, t]),
        )

    def steps(self, agent: int) -> list[ExperienceStep]:
        return [self.step(agent, t) for t in range(self.length)]


@dataclass
class RunStreams:
    """Independent random streams for one run.

    Splitting by purpose keeps protocol randomness (consensus masks) from
    perturbing environment or policy sampling.
    """

    env: np.random.Generator
    agents: list[np.random.Generator]
    protocol: np.random.Generator
    init: list[np.random.Generator]

    @classmethod
    def from_seed(cls, seed: int, n_agents: int) -> "RunStreams":
        env_ss, agents_ss, protocol_ss, init_ss = np.random.SeedSequence(seed).spawn(4)
        return cls(
            env=np.random.default_rng(env_ss),
            agents=[np.random.default_rng(s) for s in agents_ss.spawn(n_agents)],
            protocol=np.random.default_rng(protocol_ss),
            init=[np.random.default_rng(s) for s in init_ss.spawn(n_agents)],
        )


def run_episode(env: Environment, agents: Sequence[ActorCritic], protocol: Protocol, streams: RunStreams) -> EpisodeRollout:
    """Play one episode to the time limit.

    Per step: every agent samples from its policy, the environment applies
    the joint action, then the protocol shapes rewards over the
    post-transition neighborhoods.
    """
    n = env.n_agents
    if len(agents) != n:
        raise ConfigurationError(f"{len(agents)} learners for an environment with {n} agents")
    T = env.time_limit
    obs = env.reset()
    Z = obs.shape[1]
    observations = np.empty((n, T + 1, Z))
    actions = np.empty((n, T), dtype=np.int64)
    env_rewards = np.empty((n, T))
    shaped = np.empty((n, T))
    values = np.empty((n, T + 1))
    neighborhoods: list[list[tuple[int, ...]]] = []
    draws = [g.random(T + 1) for g in streams.agents]

    protocol.begin_episode()
    observations[:, 0] = obs
    current = np.empty(n, dtype=np.int64)
    for i, agent in enumerate(agents):
        current[i], values[i, 0] = agent.act(observations[i, 0], draws[i][0])

    for t in range(T):
        actions[:, t] = current
        env_actions = protocol.env_actions(current, env.neighborhoods())
        obs, rewards = env.step(env_actions)
        observations[:, t + 1] = obs
        for i, agent in enumerate(agents):
            current[i], values[i, t + 1] = agent.act(observations[i, t + 1], draws[i][t + 1])
        nbrs = env.neighborhoods()
        env_rewards[:, t] = rewards
        shaped[:, t] = protocol.shape(rewards, values[:, t], values[:, t + 1], nbrs)
        neighborhoods.append(nbrs)

    return EpisodeRollout(
        observations=observations,
        actions=actions,
        env_rewards=env_rewards,
        shaped_rewards=shaped,
        values=values,
        neighborhoods=neighborhoods,
        stats=env.episode_stats(),
    )


def run_epoch(env, agents, protocol, episodes_per_epoch: int, streams: RunStreams) -> list[EpisodeRollout]:
    """Run episodes with a learner update after each, then fire the
    protocol's epoch hook once."""
    if episodes_per_epoch < 1:
        raise ConfigurationError("episodes_per_epoch must be >= 1")
    rollouts = []
    for _ in range(episodes_per_epoch):
        rollout = run_episode(env, agents, protocol, streams)
        protocol.end_episode(rollout)
        for i, agent in enumerate(agents):
            agent.update(rollout.observations[i], rollout.actions[i], rollout.shaped_rewards[i])
        rollouts.append(rollout)
    protocol.end_epoch(rollouts, streams.protocol)
    return rollouts
