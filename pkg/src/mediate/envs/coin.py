from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from .base import Environment

LEFT, RIGHT, UP, DOWN, STAY = range(5)
# (d_row, d_col) per action; STAY is env-internal and only reachable via gifting
MOVES = np.array([(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)])

GRID_SIZES = {2: 3, 4: 5, 6: 7}


def coin_rewards(collectors: Sequence[int], owner: int, n_agents: int, scale: float = 1.0) -> np.ndarray:
    """Rewards for one collection event.

    Every collector gains ``+scale`` and the owner pays ``-2 * scale`` per
    non-owner collector, so an owner sharing its coin with one other agent
    nets ``-scale``.
    """
    rewards = np.zeros(n_agents)
    if len(collectors) == 0:
        return rewards
    for c in collectors:
        rewards[c] += scale
    foreign = sum(1 for c in collectors if c != owner)
    rewards[owner] -= 2.0 * scale * foreign
    return rewards


class CoinGame(Environment):
    """N-agent Coin Game on a square grid (3x3, 5x5 or 7x7 for 2, 4, 6 agents).

    Agents may share cells. ``reward_scale=0.1`` gives the rescaled variant.
    """

    name = "coin"
    n_actions = 4
    noop_action = STAY

    def __init__(
        self,
        n_agents: int = 2,
        reward_scale: float = 1.0,
        time_limit: int = 150,
        gamma: float = 0.95,
        grid_size: int | None = None,
        rng=None,
    ):
        super().__init__(rng)
        if grid_size is None:
            if n_agents not in GRID_SIZES:
                raise ConfigurationError(f"no default grid size for {n_agents} agents")
            grid_size = GRID_SIZES[n_agents]
        if grid_size * grid_size <= n_agents:
            raise ConfigurationError("grid too small for agents plus a coin")
        self.n_agents = n_agents
        self.grid_size = grid_size
        self.reward_scale = reward_scale
        self.time_limit = time_limit
        self.gamma = gamma
        self.obs_dim = 4 * grid_size * grid_size
        self._pos = [[0, 0] for _ in range(n_agents)]
        self._coin = (0, 0)
        self.coin_owner = 0
        self.own_coins = 0
        self.total_coins = 0

    def reset(self) -> np.ndarray:
        g = self.grid_size
        self.step_count = 0
        self.own_coins = 0
        self.total_coins = 0
        cells = self.rng.integers(0, g, size=(self.n_agents, 2))
        self._pos = [[int(r), int(c)] for r, c in cells]
        self._spawn_coin()
        return self.observations()

    @property
    def positions(self) -> np.ndarray:
        return np.array(self._pos, dtype=np.int64).reshape(self.n_agents, 2)

    @positions.setter
    def positions(self, value) -> None:
        self._pos = [[int(r), int(c)] for r, c in np.asarray(value).reshape(-1, 2)]

    @property
    def coin_position(self) -> np.ndarray:
        return np.array(self._coin)

    @coin_position.setter
    def coin_position(self, value) -> None:
        self._coin = (int(value[0]), int(value[1]))

    def _spawn_coin(self) -> None:
        g = self.grid_size
        occupied = {r * g + c for r, c in self._pos}
        free = [cell for cell in range(g * g) if cell not in occupied]
        cell = free[int(self.rng.random() * len(free))]
        self._coin = divmod(cell, g)
        self.coin_owner = int(self.rng.random() * self.n_agents)

    def step(self, actions):
        last = self.grid_size - 1
        cr, cc = self._coin
        collectors = []
        for i, a in enumerate(actions):
            pos = self._pos[i]
            if a == LEFT:
                if pos[1] > 0:
                    pos[1] -= 1
            elif a == RIGHT:
                if pos[1] < last:
                    pos[1] += 1
            elif a == UP:
                if pos[0] > 0:
                    pos[0] -= 1
            elif a == DOWN:
                if pos[0] < last:
                    pos[0] += 1
            elif a != STAY:
                raise ValueError(f"invalid Coin Game action {a}")
            if pos[0] == cr and pos[1] == cc:
                collectors.append(i)
        if collectors:
            rewards = coin_rewards(collectors, self.coin_owner, self.n_agents, self.reward_scale)
            self.total_coins += len(collectors)
            self.own_coins += int(self.coin_owner in collectors)
            self._spawn_coin()
        else:
            rewards = np.zeros(self.n_agents)
        self.step_count += 1
        return self.observations(), rewards

    def observations(self) -> np.ndarray:
        """Egocentric channels: self, other agents, own-colored coin, foreign coin."""
        g = self.grid_size
        gg = g * g
        n = self.n_agents
        obs = np.zeros((n, 4 * gg))
        flat = [r * g + c for r, c in self._pos]
        coin = self._coin[0] * g + self._coin[1]
        for i in range(n):
            row = obs[i]
            row[flat[i]] = 1.0
            for j in range(n):
                if j != i:
                    row[gg + flat[j]] = 1.0
            row[(2 if i == self.coin_owner else 3) * gg + coin] = 1.0
        return obs

    def episode_stats(self) -> dict[str, float]:
        return {"own_coins": self.own_coins, "total_coins": self.total_coins}
