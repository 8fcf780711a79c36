from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError
from .base import Environment

MOVE_LEFT, MOVE_RIGHT, MOVE_UP, MOVE_DOWN = 0, 1, 2, 3
TAG_LEFT, TAG_RIGHT, TAG_UP, TAG_DOWN = 4, 5, 6, 7
NOOP = 8
DIRECTIONS = np.array([(0, -1), (0, 1), (-1, 0), (1, 0)])

VIEW_RADIUS = 3  # 7x7 window
REGROWTH_RADIUS = 2
DEFAULT_REGROWTH = (0.01, 0.05, 0.1)
TAG_DURATION = 25
APPLE_REWARD = 1.0
TIME_PENALTY = -0.1


def load_map(path: str | Path | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Parse a text map into ``(walls, apple_spots)`` boolean grids."""
    if path is None:
        text = resources.files("mediate.envs").joinpath("data/harvest.txt").read_text()
    else:
        text = Path(path).read_text()
    rows = [line for line in text.splitlines() if line.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ConfigurationError("map rows must have equal length")
    bad = set("".join(rows)) - set(".A#")
    if bad:
        raise ConfigurationError(f"unknown map characters: {sorted(bad)}")
    grid = np.array([list(r) for r in rows])
    return grid == "#", grid == "A"


def apple_counts(apples: np.ndarray, radius: int = REGROWTH_RADIUS) -> np.ndarray:
    """Number of apples within Chebyshev ``radius`` of every cell."""
    padded = np.pad(apples.astype(np.int64), radius)
    k = 2 * radius + 1
    return sliding_window_view(padded, (k, k)).sum(axis=(2, 3))


def regrowth_probabilities(counts: np.ndarray, probs=DEFAULT_REGROWTH) -> np.ndarray:
    p1, p2, p3 = probs
    out = np.zeros(counts.shape)
    out[(counts >= 1) & (counts <= 2)] = p1
    out[(counts >= 3) & (counts <= 4)] = p2
    out[counts >= 5] = p3
    return out


def harvest_regrow(apples, spots, rng, probs=DEFAULT_REGROWTH, blocked=None) -> np.ndarray:
    """One regrowth pass; returns the new apple grid.

    Each empty apple spot regrows independently with a probability set by
    the apple count in its neighborhood. ``blocked`` cells (occupied by
    agents) never regrow.
    """
    empty = spots & ~apples
    if blocked is not None:
        empty &= ~blocked
    p = regrowth_probabilities(apple_counts(apples), probs)
    draws = rng.random(apples.shape)
    return apples | (empty & (draws < p))


class Harvest(Environment):
    """Commons harvesting game with tagging, partial observability and
    position-dependent neighborhoods."""

    name = "harvest"
    n_actions = 9
    noop_action = NOOP

    def __init__(
        self,
        n_agents: int = 6,
        time_limit: int = 250,
        gamma: float = 0.99,
        regrowth=DEFAULT_REGROWTH,
        map_path: str | Path | None = None,
        rng=None,
    ):
        super().__init__(rng)
        self.n_agents = n_agents
        self.time_limit = time_limit
        self.gamma = gamma
        self.regrowth = tuple(regrowth)
        self.walls, self.spots = load_map(map_path)
        self.height, self.width = self.walls.shape
        if (~self.walls & ~self.spots).sum() < n_agents:
            raise ConfigurationError("map has fewer free cells than agents")
        self.obs_dim = 4 * (2 * VIEW_RADIUS + 1) ** 2
        self.apples = self.spots.copy()
        self.positions = np.zeros((n_agents, 2), dtype=np.int64)
        self.tagged_until = np.zeros(n_agents, dtype=np.int64)
        self.apples_harvested = 0
        self.tags = 0

    @property
    def active(self) -> np.ndarray:
        return self.tagged_until <= self.step_count

    def reset(self) -> np.ndarray:
        self.step_count = 0
        self.apples = self.spots.copy()
        self.tagged_until[:] = 0
        self.apples_harvested = 0
        self.tags = 0
        free = np.flatnonzero((~self.walls & ~self.spots).ravel())
        cells = self.rng.choice(free, size=self.n_agents, replace=False)
        self.positions = np.stack(np.divmod(cells, self.width), axis=1)
        return self.observations()

    def _occupied(self) -> np.ndarray:
        occ = np.zeros(self.walls.shape, dtype=bool)
        act = self.active
        occ[self.positions[act, 0], self.positions[act, 1]] = True
        return occ

    def _beam_targets(self, agent: int, direction: int) -> list[int]:
        dr, dc = DIRECTIONS[direction]
        r, c = self.positions[agent]
        out = []
        for j in np.flatnonzero(self.active):
            if j == agent:
                continue
            orow, ocol = self.positions[j] - (r, c)
            if max(abs(orow), abs(ocol)) > VIEW_RADIUS:
                continue
            if (dr and np.sign(orow) == dr) or (dc and np.sign(ocol) == dc):
                out.append(int(j))
        return out

    def step(self, actions):
        n = self.n_agents
        rewards = np.zeros(n)
        acting = np.flatnonzero(self.active)
        rewards[acting] += TIME_PENALTY
        occupied = self._occupied()
        for i in self.rng.permutation(acting):
            if self.tagged_until[i] > self.step_count:
                continue  # tagged earlier this step
            a = int(actions[i])
            if a <= MOVE_DOWN:
                r, c = self.positions[i] + DIRECTIONS[a]
                if not (0 <= r < self.height and 0 <= c < self.width):
                    continue
                if self.walls[r, c] or occupied[r, c]:
                    continue
                occupied[tuple(self.positions[i])] = False
                occupied[r, c] = True
                self.positions[i] = (r, c)
                if self.apples[r, c]:
                    self.apples[r, c] = False
                    rewards[i] += APPLE_REWARD
                    self.apples_harvested += 1
            elif a <= TAG_DOWN:
                for j in self._beam_targets(i, a - TAG_LEFT):
                    self.tagged_until[j] = self.step_count + 1 + TAG_DURATION
                    occupied[tuple(self.positions[j])] = False
                    self.tags += 1
            elif a != NOOP:
                raise ValueError(f"invalid Harvest action {a}")
        self.apples = harvest_regrow(self.apples, self.spots, self.rng, self.regrowth, blocked=occupied)
        self.step_count += 1
        self._respawn()
        return self.observations(), rewards

    def _respawn(self) -> None:
        returning = np.flatnonzero(self.tagged_until == self.step_count)
        placed = self.active.copy()
        placed[returning] = False
        for i in returning:
            occupied = np.zeros(self.walls.shape, dtype=bool)
            occupied[self.positions[placed, 0], self.positions[placed, 1]] = True
            free = np.flatnonzero((~self.walls & ~self.apples & ~occupied).ravel())
            cell = free[self.rng.integers(len(free))]
            self.positions[i] = divmod(int(cell), self.width)
            placed[i] = True

    def observations(self) -> np.ndarray:
        """7x7 egocentric window with channels self, others, apples, blocked."""
        k = VIEW_RADIUS
        w = 2 * k + 1
        n = self.n_agents
        agents = np.zeros((self.height + 2 * k, self.width + 2 * k))
        act = self.active
        np.add.at(agents, (self.positions[act, 0] + k, self.positions[act, 1] + k), 1.0)
        apples = np.pad(self.apples.astype(float), k)
        blocked = np.pad(self.walls.astype(float), k, constant_values=1.0)
        obs = np.zeros((n, 4, w, w))
        for i in np.flatnonzero(act):
            r, c = self.positions[i]
            obs[i, 0, k, k] = 1.0
            obs[i, 1] = agents[r : r + w, c : c + w]
            obs[i, 1, k, k] -= 1.0
            obs[i, 2] = apples[r : r + w, c : c + w]
            obs[i, 3] = blocked[r : r + w, c : c + w]
        return obs.reshape(n, self.obs_dim)

    def neighborhoods(self) -> list[tuple[int, ...]]:
        act = self.active
        out: list[tuple[int, ...]] = []
        for i in range(self.n_agents):
            if not act[i]:
                out.append(())
                continue
            d = np.abs(self.positions - self.positions[i]).max(axis=1)
            near = (d <= VIEW_RADIUS) & act
            near[i] = False
            out.append(tuple(int(j) for j in np.flatnonzero(near)))
        return out

    def episode_stats(self) -> dict[str, float]:
        return {"apples_harvested": self.apples_harvested, "tags": self.tags}
