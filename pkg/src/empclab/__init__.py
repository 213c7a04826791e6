"""empclab: event-triggered nonlinear MPC with learned trigger policies.

A desk-scale testbed: a single-track vehicle tracking a sinusoidal path, a
direct-shooting solver for the finite-horizon optimal control problem, an
event-triggered execution layer with a plan buffer, and reinforcement-learning
agents (DDQN, PPO, discrete SAC; PER and LSTM variants) that learn when the
controller should re-solve.
"""

from . import agents, dynamics, empc, harness, nn, ocp
from .config import (AgentConfig, EmpcConfig, LabConfig, OcpConfig,
                     TrainConfig, default_config, load_config, save_config)
from .dynamics import VehicleModel, VehicleParams
from .empc import PlanBuffer, TriggerEnv
from .ocp import OcpSolution, OcpSolver

__version__ = "0.1.0"

__all__ = [
    "agents", "dynamics", "empc", "harness", "nn", "ocp",
    "AgentConfig", "EmpcConfig", "LabConfig", "OcpConfig", "TrainConfig",
    "default_config", "load_config", "save_config",
    "VehicleModel", "VehicleParams", "PlanBuffer", "TriggerEnv",
    "OcpSolution", "OcpSolver",
    "__version__",
]
