"""Parameter storage shared by all network blocks.

Everything is float64: gradient checks against central differences and the
interop with the MPC layer both want tight tolerances at this scale.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteStateError


class Parameter:
    """A named weight array with a mirrored gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[:] = 0.0

    def check_finite(self):
        if not np.all(np.isfinite(self.value)):
            raise NonFiniteStateError(f"parameter {self.name!r} became non-finite")

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def he_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """Fan-in scaled uniform init for ReLU layers."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape) -> np.ndarray:
    """Fan-in/fan-out scaled uniform init for linear heads and LSTM blocks."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)
