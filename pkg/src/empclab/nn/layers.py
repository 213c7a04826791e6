"""Fully connected layers and the feed-forward network used by the agents."""

from __future__ import annotations

import numpy as np

from .params import Parameter, he_uniform, xavier_uniform


class Linear:
    """Affine map ``y = x @ W + b`` with explicit forward/backward."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 name: str = "linear", relu_fan: bool = True):
        init = he_uniform(rng, n_in, (n_in, n_out)) if relu_fan \
            else xavier_uniform(rng, n_in, n_out, (n_in, n_out))
        self.weight = Parameter(f"{name}.weight", init)
        self.bias = Parameter(f"{name}.bias", np.zeros(n_out))
        self.n_in, self.n_out = n_in, n_out

    def forward(self, x: np.ndarray):
        return x @ self.weight.value + self.bias.value, x

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        x = cache
        self.weight.grad += x.T @ d_out
        self.bias.grad += d_out.sum(axis=0)
        return d_out @ self.weight.value.T

    def parameters(self):
        return [self.weight, self.bias]


def relu(x: np.ndarray):
    mask = x > 0.0
    return x * mask, mask


def relu_backward(mask: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    return d_out * mask


class MLPNetwork:
    """ReLU stack topped by a linear head.

    Input dimension 12 matches the flattened environment state; the head
    width is 2 for action values/logits, 1 for state values.
    """

    kind = "mlp"

    def __init__(self, n_in: int, hidden, n_out: int,
                 rng: np.random.Generator, name: str = "net"):
        self.n_in, self.hidden, self.n_out = int(n_in), list(hidden), int(n_out)
        self.layers = []
        last = n_in
        for i, width in enumerate(self.hidden):
            self.layers.append(Linear(last, width, rng, name=f"{name}.fc{i}"))
            last = width
        self.head = Linear(last, n_out, rng, name=f"{name}.head", relu_fan=False)

    def topology(self):
        return {"kind": self.kind, "n_in": self.n_in,
                "hidden": self.hidden, "n_out": self.n_out}

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        params.extend(self.head.parameters())
        return params

    def forward(self, x: np.ndarray):
        """Map a (batch, n_in) array to (batch, n_out); returns (out, cache)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got {x.shape[1]}")
        caches = []
        for layer in self.layers:
            x, lin_cache = layer.forward(x)
            x, mask = relu(x)
            caches.append((lin_cache, mask))
        out, head_cache = self.head.forward(x)
        return out, (caches, head_cache)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns gradient w.r.t. the input."""
        caches, head_cache = cache
        d = self.head.backward(head_cache, np.atleast_2d(d_out))
        for layer, (lin_cache, mask) in zip(reversed(self.layers), reversed(caches)):
            d = relu_backward(mask, d)
            d = layer.backward(lin_cache, d)
        return d

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]
