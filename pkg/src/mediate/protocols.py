"""Peer-incentivization protocols: naive learning, MATE token exchange and
reward gifting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError


class Protocol:
    """Naive learning: no exchange, shaped reward equals env reward."""

    name = "naive"

    def __init__(self) -> None:
        self.n_agents = 0
        self.gamma = 0.0

    def bind(self, env) -> None:
        self.n_agents = env.n_agents
        self.gamma = env.gamma

    def extra_actions(self, n_agents: int) -> int:
        return 0

    def begin_episode(self) -> None:
        pass

    def env_actions(self, actions: np.ndarray, neighborhoods) -> np.ndarray:
        return actions

    def shape(self, env_rewards, values, next_values, neighborhoods) -> np.ndarray:
        return np.array(env_rewards, dtype=float)

    def end_episode(self, rollout) -> None:
        pass

    def end_epoch(self, rollouts, rng) -> None:
        pass

    def metrics(self) -> dict[str, np.ndarray]:
        """Per-agent protocol quantities reported once per epoch."""
        return {}


NaiveProtocol = Protocol


def mate_request(agent: int, mi: float, token: float, neighbors: Sequence[int]) -> dict[int, float]:
    """Request phase: send ``token`` to every neighbor when MI is non-negative."""
    if token < 0:
        raise ValueError("request tokens must be non-negative")
    if mi >= 0.0:
        return {n: token for n in neighbors}
    return {}


def _response_mi(env_reward, received_request, value_at, value_next, gamma) -> float:
    return (env_reward + received_request) + gamma * value_next - value_at


def mate_response(agent, env_reward, received_request, value_at, value_next, gamma, token) -> float:
    """Response phase: ``+token`` if the TD error including the received
    request is non-negative, ``-token`` otherwise."""
    if received_request < 0:
        raise ValueError("received requests must be non-negative")
    if _response_mi(env_reward, received_request, value_at, value_next, gamma) >= 0.0:
        return token
    return -token


def mate_shape_reward(agent, env_reward, accepted_requests, responses_received) -> float:
    shaped = env_reward
    for r in accepted_requests:
        shaped += r
    for r in responses_received:
        shaped += r
    return shaped


def decentralized_tokens(tokens, n_agents: int) -> np.ndarray:
    arr = np.asarray(tokens, dtype=float).ravel()
    if arr.size != n_agents:
        raise ConfigurationError(f"{arr.size} tokens given for {n_agents} agents")
    if (arr < 0).any():
        raise ConfigurationError("tokens must be non-negative")
    return arr


@dataclass
class ExchangeRecord:
    mi_values: np.ndarray
    requests_sent: list[dict[int, float]]
    responses_received: list[dict[int, float]]
    shaped_rewards: np.ndarray


class MateProtocol(Protocol):
    """Mutual acknowledgment token exchange with TD-error improvement checks.

    ``tokens`` is a scalar (centralized) or one value per agent
    (decentralized); each agent uses its own token for requests and
    responses.
    """

    name = "mate"

    def __init__(self, tokens: float | Sequence[float] = 1.0, record: bool = False):
        super().__init__()
        self._init_tokens = tokens
        self.tokens = np.atleast_1d(np.asarray(tokens, dtype=float))
        self.record = record
        self.last_exchange: ExchangeRecord | None = None

    def bind(self, env) -> None:
        super().bind(env)
        if np.ndim(self._init_tokens) == 0:
            self.tokens = np.full(env.n_agents, float(self._init_tokens))
            if self.tokens[0] < 0:
                raise ConfigurationError("token must be non-negative")
        else:
            self.tokens = decentralized_tokens(self._init_tokens, env.n_agents)

    def shape(self, env_rewards, values, next_values, neighborhoods) -> np.ndarray:
        n = len(env_rewards)
        gamma = self.gamma
        tokens = self.tokens.tolist()
        env_r = np.asarray(env_rewards, dtype=float).tolist()
        v = np.asarray(values, dtype=float).tolist()
        v_next = np.asarray(next_values, dtype=float).tolist()
        mi = [env_r[i] + gamma * v_next[i] - v[i] for i in range(n)]

        requests = [mate_request(i, mi[i], tokens[i], neighborhoods[i]) for i in range(n)]
        incoming: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for i, sent in enumerate(requests):
            for j, amount in sent.items():
                incoming[j].append((i, amount))

        accepted: list[list[float]] = [[] for _ in range(n)]
        responses: list[dict[int, float]] = [{} for _ in range(n)]
        for j in range(n):
            if not incoming[j]:
                continue
            total = 0.0
            for _, amount in incoming[j]:
                total += amount
            answer = mate_response(j, env_r[j], total, v[j], v_next[j], gamma, tokens[j])
            if _response_mi(env_r[j], total, v[j], v_next[j], gamma) >= 0.0:
                accepted[j].append(total)
            for i, _ in incoming[j]:
                responses[i][j] = answer

        shaped = np.array(
            [mate_shape_reward(i, env_r[i], accepted[i], responses[i].values()) for i in range(n)]
        )
        if self.record:
            self.last_exchange = ExchangeRecord(np.array(mi), requests, responses, shaped)
        return shaped

    def metrics(self) -> dict[str, np.ndarray]:
        return {"exchange_token": self.tokens.copy()}


@dataclass
class GiftingState:
    mode: str
    n_env_actions: int
    gift_value: float = 1.0
    budget: float = 15.0
    remaining_budget: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.mode not in ("zero_sum", "fixed_budget"):
            raise ConfigurationError(f"unknown gifting mode {self.mode!r}")


def gift_target(agent: int, extended_action: int, n_env_actions: int) -> int | None:
    """Agent addressed by a gift action, or None for an env action."""
    k = extended_action - n_env_actions
    if k < 0:
        return None
    return k if k < agent else k + 1


def gifting_act(agent: int, extended_action: int, neighbors: Sequence[int], state: GiftingState) -> np.ndarray:
    """Reward deltas caused by one agent's (possibly gift) action."""
    n = len(state.remaining_budget)
    deltas = np.zeros(n)
    target = gift_target(agent, extended_action, state.n_env_actions)
    if target is None or target not in neighbors:
        return deltas
    g = state.gift_value
    if state.mode == "zero_sum":
        deltas[target] += g
        deltas[agent] -= g
    elif state.remaining_budget[agent] >= g:
        deltas[target] += g
        state.remaining_budget[agent] -= g
    return deltas


class GiftingProtocol(Protocol):
    """Gifting as extra actions: one gift action per other agent.

    A gift replaces the agent's environment move with a no-op.
    """

    def __init__(self, mode: str = "zero_sum", gift_value: float = 1.0, budget: float = 15.0):
        super().__init__()
        self.mode = mode
        self.name = "gift-zerosum" if mode == "zero_sum" else "gift-budget"
        self.gift_value = gift_value
        self.budget = budget
        self.state: GiftingState | None = None
        self._pending = np.zeros(0)
        self.gifts_sent = 0

    def bind(self, env) -> None:
        super().bind(env)
        if env.noop_action is None:
            raise ConfigurationError(f"gifting needs a no-op move, which {env.name} lacks")
        self.noop = env.noop_action
        self.state = GiftingState(self.mode, env.n_actions, self.gift_value, self.budget, np.zeros(env.n_agents))
        self._pending = np.zeros(env.n_agents)

    def extra_actions(self, n_agents: int) -> int:
        return n_agents - 1

    def begin_episode(self) -> None:
        self.state.remaining_budget[:] = self.budget

    def env_actions(self, actions, neighborhoods) -> np.ndarray:
        env_actions = np.array(actions, dtype=np.int64)
        self._pending = np.zeros(self.n_agents)
        n_env = self.state.n_env_actions
        for i, a in enumerate(env_actions):
            if a >= n_env:
                deltas = gifting_act(i, int(a), neighborhoods[i], self.state)
                if deltas.any():
                    self.gifts_sent += 1
                self._pending += deltas
                env_actions[i] = self.noop
        return env_actions

    def shape(self, env_rewards, values, next_values, neighborhoods) -> np.ndarray:
        return np.asarray(env_rewards, dtype=float) + self._pending

    def metrics(self) -> dict[str, np.ndarray]:
        return {"remaining_budget": self.state.remaining_budget.copy()}
