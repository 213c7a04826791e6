"""Adam optimizer over Parameter lists, with serializable moment state."""

from __future__ import annotations

import numpy as np

from .params import Parameter


class Adam:
    """Bias-corrected Adam; ``step()`` applies and then clears gradients."""

    def __init__(self, params: list[Parameter], learning_rate: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.learning_rate = float(learning_rate)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        sqrt_c2 = np.sqrt(1.0 - self.beta2 ** self.t)
        # m_hat / (sqrt(v_hat) + eps) == sqrt(c2)/c1 * m / (sqrt(v) + eps*sqrt(c2))
        scale = self.learning_rate * sqrt_c2 / correct1
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            g *= g
            v *= self.beta2
            v += (1.0 - self.beta2) * g
            denom = np.sqrt(v)
            denom += self.eps * sqrt_c2
            np.divide(m, denom, out=denom)
            denom *= scale
            p.value -= denom
            p.check_finite()
            p.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_blocks(self, prefix: str = "adam") -> dict[str, np.ndarray]:
        """Moment arrays keyed for checkpointing."""
        blocks = {}
        for p, m, v in zip(self.params, self.m, self.v):
            blocks[f"{prefix}.m.{p.name}"] = m
            blocks[f"{prefix}.v.{p.name}"] = v
        return blocks

    def load_state_blocks(self, blocks: dict[str, np.ndarray],
                          prefix: str = "adam"):
        for i, p in enumerate(self.params):
            self.m[i][...] = blocks[f"{prefix}.m.{p.name}"]
            self.v[i][...] = blocks[f"{prefix}.v.{p.name}"]
