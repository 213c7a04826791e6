import numpy as np
import pytest

from empclab.config import LabConfig
from empclab.dynamics import VehicleModel


@pytest.fixture(scope="session")
def config() -> LabConfig:
    """Default configuration; tests must not mutate it."""
    return LabConfig()


@pytest.fixture(scope="session")
def model(config) -> VehicleModel:
    m = VehicleModel(config.vehicle, config.train.dt)
    # First call loads/compiles the jitted kernels.
    m.step_with_jacobians(config.empc.x0, np.zeros(2))
    m.rollout_with_jacobians(config.empc.x0, np.zeros((config.ocp.horizon, 2)))
    return m
