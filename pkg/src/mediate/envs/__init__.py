"""Benchmark social-dilemma environments."""

from __future__ import annotations

from ..errors import ConfigurationError
from .base import Environment
from .coin import CoinGame, coin_rewards
from .harvest import Harvest, harvest_regrow, load_map
from .ipd import IteratedPrisonersDilemma, ipd_rewards

ENV_NAMES = ("ipd", "coin", "coin-rescaled", "harvest")


def make_env(name: str, n_agents: int | None = None, rng=None, **kwargs) -> Environment:
    """Build an environment by name with the appendix defaults."""
    if name == "ipd":
        return IteratedPrisonersDilemma(rng=rng, n_agents=n_agents or 2, **kwargs)
    if name in ("coin", "coin-rescaled"):
        if name == "coin-rescaled":
            kwargs.setdefault("reward_scale", 0.1)
        return CoinGame(n_agents=n_agents or 2, rng=rng, **kwargs)
    if name == "harvest":
        return Harvest(n_agents=n_agents or 6, rng=rng, **kwargs)
    raise ConfigurationError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")


__all__ = [
    "ENV_NAMES",
    "CoinGame",
    "Environment",
    "Harvest",
    "IteratedPrisonersDilemma",
    "coin_rewards",
    "harvest_regrow",
    "ipd_rewards",
    "load_map",
    "make_env",
]
