from __future__ import annotations

from typing import Sequence

import numpy as np


class Environment:
    """Minimal synchronous multi-agent environment interface.

    Subclasses set ``n_agents``, ``n_actions``, ``obs_dim``, ``time_limit``
    and ``gamma``. ``noop_action`` is an env-internal action index that
    leaves the agent in place; it is ``None`` when the game has no such move.
    """

    name: str = "env"
    n_agents: int
    n_actions: int
    obs_dim: int
    time_limit: int
    gamma: float
    noop_action: int | None = None

    def __init__(self, rng: np.random.Generator | None = None) -> None:
        self.rng = rng if rng is not None else np.random.default_rng()
        self.step_count = 0

    def seed(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def reset(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, actions: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Advance one step; returns ``(observations, rewards)``."""
        raise NotImplementedError

    def observations(self) -> np.ndarray:
        raise NotImplementedError

    def neighborhoods(self) -> list[tuple[int, ...]]:
        """Current neighbor sets, one tuple of agent ids per agent."""
        return self._full_neighborhoods

    @property
    def _full_neighborhoods(self) -> list[tuple[int, ...]]:
        cached = getattr(self, "_full_nbrs", None)
        if cached is None:
            n = self.n_agents
            cached = [tuple(j for j in range(n) if j != i) for i in range(n)]
            self._full_nbrs = cached
        return cached

    def episode_stats(self) -> dict[str, float]:
        """Per-episode counters accumulated since the last reset."""
        return {}

    @property
    def done(self) -> bool:
        return self.step_count >= self.time_limit
