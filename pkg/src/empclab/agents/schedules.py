"""Exploration and annealing schedules."""

from __future__ import annotations

from ..config import AgentConfig


def epsilon_schedule(step: int, config: AgentConfig) -> float:
    """Linearly decayed exploration rate, clamped at the floor afterwards."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step >= config.eps_decay_steps:
        return config.eps_end
    frac = step / config.eps_decay_steps
    return config.eps_start + (config.eps_end - config.eps_start) * frac


def per_beta_schedule(step: int, total_steps: int, config: AgentConfig) -> float:
    """Importance-sampling exponent annealed linearly over the training budget."""
    if total_steps <= 0:
        return config.per_beta_final
    frac = min(max(step / total_steps, 0.0), 1.0)
    return config.per_beta0 + (config.per_beta_final - config.per_beta0) * frac
