"""Peer-incentivization simulator: MATE token exchange, automatic token
derivation from value estimates and secret-sharing consensus."""

from .consensus import ConsensusResult, ShareBundle, consensus_round, make_shares
from .core import EpisodeRollout, ExperienceStep, RunStreams, run_episode, run_epoch
from .derivation import MediateProtocol, TokenState, mean_accumulated_value, token_gradient, track_r_min, update_token
from .errors import ConfigurationError, TrainingError
from .harness import RunConfig, run_experiment, token_sweep
from .learner import ActorCritic, LearnerConfig, td_advantage
from .protocols import GiftingProtocol, MateProtocol, Protocol

__all__ = [
    "ActorCritic",
    "ConfigurationError",
    "ConsensusResult",
    "EpisodeRollout",
    "ExperienceStep",
    "GiftingProtocol",
    "LearnerConfig",
    "MateProtocol",
    "MediateProtocol",
    "Protocol",
    "RunConfig",
    "RunStreams",
    "ShareBundle",
    "TokenState",
    "TrainingError",
    "consensus_round",
    "make_shares",
    "mean_accumulated_value",
    "run_episode",
    "run_epoch",
    "run_experiment",
    "td_advantage",
    "token_gradient",
    "token_sweep",
    "track_r_min",
    "update_token",
]
