"""Automatic token derivation from value estimates and the MEDIATE protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .consensus import DEFAULT_MASK_SCALE, ConsensusTrace, consensus_round, make_shares
from .errors import ConfigurationError
from .protocols import MateProtocol

INITIAL_TOKEN = 0.1
ALPHA = 0.1
EPS = 1e-8
VARIANTS = ("automate", "isolated", "synchronized")


@dataclass
class TokenState:
    token: float = INITIAL_TOKEN
    r_min: float = math.inf
    prev_median: float = 0.0
    epoch_means: list[float] = field(default_factory=list)


def mean_accumulated_value(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty episode")
    return float(values.sum() / values.size)


def track_r_min(state: TokenState, rewards) -> TokenState:
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size:
        state.r_min = min(state.r_min, float(rewards.min()))
    return state


def token_gradient(prev_median: float, median: float, r_min: float, alpha: float = ALPHA) -> float:
    """Relative change of the median mean value, scaled by ``|r_min|``.

    Returns 0 while the previous median is (numerically) zero or no reward
    has been observed yet.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if abs(prev_median) < EPS or not math.isfinite(r_min):
        return 0.0
    return alpha * (median - prev_median) / prev_median * abs(r_min)


def update_token(state: TokenState, gradient: float, variant: str = "isolated", consensus: float | None = None) -> TokenState:
    if variant == "synchronized":
        if consensus is None:
            raise ValueError("synchronized update needs the consensus token")
        state.token = max(consensus + gradient, 0.0)
    elif variant in ("isolated", "automate"):
        state.token = max(state.token + gradient, 0.0)
    else:
        raise ValueError(f"unknown update variant {variant!r}")
    if state.epoch_means:
        state.prev_median = float(np.median(state.epoch_means))
    state.epoch_means = []
    return state


class MediateProtocol(MateProtocol):
    """MATE with tokens derived per agent each epoch.

    ``automate`` updates and exchanges the local token. ``isolated`` and
    ``synchronized`` additionally run a secret-sharing consensus over the
    local tokens at the epoch boundary and exchange the reconstructed
    token during the next epoch; they differ in whether the local token
    is updated from itself or from the consensus token.
    """

    def __init__(
        self,
        variant: str = "isolated",
        alpha: float = ALPHA,
        initial_token: float = INITIAL_TOKEN,
        iterations: int | None = None,
        mask_scale: float = DEFAULT_MASK_SCALE,
        trace: ConsensusTrace | None = None,
        record: bool = False,
    ):
        if variant not in VARIANTS:
            raise ConfigurationError(f"unknown MEDIATE variant {variant!r}")
        super().__init__(initial_token, record=record)
        self.variant = variant
        self.name = {"automate": "automate", "isolated": "mediate-i", "synchronized": "mediate-s"}[variant]
        self.alpha = alpha
        self.initial_token = initial_token
        self.iterations = iterations
        self.mask_scale = mask_scale
        self.trace = trace
        self.states: list[TokenState] = []
        self.last_gradients = np.zeros(0)
        self.last_consensus: list | None = None
        self.epoch = 0

    def bind(self, env) -> None:
        super().bind(env)
        self.states = [TokenState(token=self.initial_token) for _ in range(env.n_agents)]
        self.last_gradients = np.zeros(env.n_agents)

    def end_episode(self, rollout) -> None:
        T = rollout.length
        for i, state in enumerate(self.states):
            track_r_min(state, rollout.env_rewards[i])
            state.epoch_means.append(mean_accumulated_value(rollout.values[i, :T]))

    def end_epoch(self, rollouts, rng) -> None:
        grads = np.array([
            token_gradient(s.prev_median, float(np.median(s.epoch_means)) if s.epoch_means else s.prev_median,
                           s.r_min, self.alpha)
            for s in self.states
        ])
        self.last_gradients = grads
        if self.variant == "automate":
            for s, g in zip(self.states, grads):
                update_token(s, g, "automate")
            self.tokens = np.array([s.token for s in self.states])
        else:
            topology = rollouts[-1].final_neighborhoods
            results = self.consensus(topology, rng)
            for s, g, res in zip(self.states, grads, results):
                update_token(s, g, self.variant, res.token)
            self.tokens = np.array([res.token for res in results])
        self.epoch += 1

    def consensus(self, topology, rng):
        n = len(self.states)
        bundles = [
            make_shares(s.token, len(topology[i]), rng, origin_id=i, scale=self.mask_scale)
            for i, s in enumerate(self.states)
        ]
        if self.trace is not None:
            self.trace.context = {"epoch": self.epoch}
        results = consensus_round(bundles, topology, self.iterations or n, self.trace)
        self.last_consensus = results
        return results

    @property
    def local_tokens(self) -> np.ndarray:
        return np.array([s.token for s in self.states])

    def metrics(self) -> dict[str, np.ndarray]:
        out = {"token": self.local_tokens, "exchange_token": self.tokens.copy()}
        if self.last_consensus is not None:
            out["consensus_coverage"] = np.array([len(r.contributing_ids) for r in self.last_consensus], dtype=float)
        return out
