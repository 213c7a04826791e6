"""Trigger-policy learners: DDQN (flat / LSTM+PER), PPO (flat / LSTM), SAC."""

from __future__ import annotations

import numpy as np

from ..config import AgentConfig, TrainConfig
from .ddqn import DdqnAgent, copy_parameters, ddqn_targets, target_sync
from .ppo import PpoAgent
from .replay import ReplayBuffer, Transition
from .sac import SacAgent, sac_targets
from .schedules import epsilon_schedule, per_beta_schedule

__all__ = [
    "DdqnAgent", "PpoAgent", "SacAgent", "ReplayBuffer", "Transition",
    "copy_parameters", "ddqn_targets", "target_sync", "sac_targets",
    "epsilon_schedule", "per_beta_schedule", "make_agent",
]


def make_agent(config: AgentConfig, train_config: TrainConfig,
               init_rng: np.random.Generator,
               explore_rng: np.random.Generator,
               buffer_rng: np.random.Generator):
    """Instantiate the agent selected by ``config.kind``."""
    kind = config.kind
    if kind == "ddqn":
        return DdqnAgent(config, train_config, init_rng, explore_rng,
                         buffer_rng, recurrent=False, use_per=False)
    if kind == "ddqn-lstm-per":
        return DdqnAgent(config, train_config, init_rng, explore_rng,
                         buffer_rng, recurrent=True, use_per=True)
    if kind == "ppo":
        return PpoAgent(config, train_config, init_rng, explore_rng,
                        recurrent=False)
    if kind == "ppo-lstm":
        return PpoAgent(config, train_config, init_rng, explore_rng,
                        recurrent=True)
    if kind == "sac":
        return SacAgent(config, train_config, init_rng, explore_rng,
                        buffer_rng)
    raise ValueError(f"unknown agent kind {kind!r}")
