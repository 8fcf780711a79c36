from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from .base import Environment

COOPERATE = 0
DEFECT = 1

# PAYOFFS[a_row, a_col] -> (row reward, col reward)
PAYOFFS = np.array(
    [
        [(-1.0, -1.0), (-3.0, 0.0)],
        [(0.0, -3.0), (-2.0, -2.0)],
    ]
)


def ipd_rewards(joint_action: Sequence[int]) -> tuple[float, float]:
    a, b = joint_action
    if a not in (COOPERATE, DEFECT) or b not in (COOPERATE, DEFECT):
        raise ValueError(f"invalid IPD joint action {joint_action!r}")
    ra, rb = PAYOFFS[a, b]
    return float(ra), float(rb)


class IteratedPrisonersDilemma(Environment):
    """Two-player repeated Prisoner's Dilemma.

    Each agent observes ``[own last action, opponent last action]`` with
    defect encoded as 1; the first observation is all zeros.
    """

    name = "ipd"
    n_agents = 2
    n_actions = 2
    obs_dim = 2

    def __init__(self, time_limit: int = 150, gamma: float = 0.95, rng=None, n_agents: int = 2):
        super().__init__(rng)
        if n_agents != 2:
            raise ConfigurationError("IPD is a two-player game")
        self.time_limit = time_limit
        self.gamma = gamma
        self.last_joint_action: tuple[int, int] | None = None

    def reset(self) -> np.ndarray:
        self.step_count = 0
        self.last_joint_action = None
        return self.observations()

    def observations(self) -> np.ndarray:
        obs = np.zeros((2, 2))
        if self.last_joint_action is not None:
            a, b = self.last_joint_action
            obs[0] = (a, b)
            obs[1] = (b, a)
        return obs

    def step(self, actions):
        a, b = int(actions[0]), int(actions[1])
        rewards = np.array(ipd_rewards((a, b)))
        self.last_joint_action = (a, b)
        self.step_count += 1
        return self.observations(), rewards
