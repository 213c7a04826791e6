"""LSTM cell and the recurrent network variant (FC encoder -> LSTM -> head)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _sigmoid

from .layers import Linear, relu, relu_backward
from .params import Parameter, xavier_uniform


@dataclass
class LstmState:
    """Hidden and cell vectors; zero at every episode (or window) start."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, batch: int, size: int) -> "LstmState":
        return cls(h=np.zeros((batch, size)), c=np.zeros((batch, size)))

    def copy(self) -> "LstmState":
        return LstmState(h=self.h.copy(), c=self.c.copy())


class LSTMCell:
    """Standard LSTM cell with combined gate weights.

    Gate order in the packed (n_in + n_hidden, 4*n_hidden) weight is
    input, forget, candidate, output.
    """

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator,
                 name: str = "lstm"):
        self.n_in, self.n_hidden = int(n_in), int(n_hidden)
        packed = xavier_uniform(rng, n_in + n_hidden, 4 * n_hidden,
                                (n_in + n_hidden, 4 * n_hidden))
        self.weight = Parameter(f"{name}.weight", packed)
        self.bias = Parameter(f"{name}.bias", np.zeros(4 * n_hidden))

    def parameters(self):
        return [self.weight, self.bias]

    def step(self, x: np.ndarray, state: LstmState):
        """One cell update; returns (h', state', cache)."""
        if x.shape[1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got {x.shape[1]}")
        nh = self.n_hidden
        xh = np.concatenate([x, state.h], axis=1)
        z = xh @ self.weight.value
        z += self.bias.value
        gates = _sigmoid(np.concatenate([z[:, :2 * nh], z[:, 3 * nh:]], axis=1))
        gate_i, gate_f = gates[:, :nh], gates[:, nh:2 * nh]
        gate_o = gates[:, 2 * nh:]
        cand = np.tanh(z[:, 2 * nh:3 * nh])
        c_new = gate_f * state.c + gate_i * cand
        tanh_c = np.tanh(c_new)
        h_new = gate_o * tanh_c
        cache = (xh, state.c, gate_i, gate_f, cand, gate_o, tanh_c)
        return h_new, LstmState(h=h_new, c=c_new), cache

    def step_backward(self, cache, d_h: np.ndarray, d_c: np.ndarray):
        """Backward through one cell update.

        ``d_h``/``d_c`` are gradients w.r.t. the step's outputs; returns
        ``(d_x, d_h_prev, d_c_prev)`` and accumulates parameter gradients.
        """
        xh, c_prev, gate_i, gate_f, cand, gate_o, tanh_c = cache
        nh = self.n_hidden
        d_o = d_h * tanh_c
        d_cnew = d_c + d_h * gate_o * (1.0 - tanh_c * tanh_c)
        d_i = d_cnew * cand
        d_g = d_cnew * gate_i
        d_f = d_cnew * c_prev
        d_c_prev = d_cnew * gate_f
        dz = np.concatenate([
            d_i * gate_i * (1.0 - gate_i),
            d_f * gate_f * (1.0 - gate_f),
            d_g * (1.0 - cand * cand),
            d_o * gate_o * (1.0 - gate_o),
        ], axis=1)
        self.weight.grad += xh.T @ dz
        self.bias.grad += dz.sum(axis=0)
        d_xh = dz @ self.weight.value.T
        return d_xh[:, :self.n_in], d_xh[:, self.n_in:], d_c_prev


class LSTMNetwork:
    """FC encoder, LSTM core, linear head; the recurrent agent network.

    ``step`` keeps an explicit recurrent state for acting;
    ``forward_sequence`` runs zero-initialized windows for training, with an
    optional mask so left-padded rows pass the state through unchanged.
    """

    kind = "lstm"

    def __init__(self, n_in: int, fc_sizes, lstm_size: int, n_out: int,
                 rng: np.random.Generator, name: str = "net"):
        self.n_in, self.fc_sizes = int(n_in), list(fc_sizes)
        self.lstm_size, self.n_out = int(lstm_size), int(n_out)
        self.encoder = []
        last = n_in
        for i, width in enumerate(self.fc_sizes):
            self.encoder.append(Linear(last, width, rng, name=f"{name}.fc{i}"))
            last = width
        self.cell = LSTMCell(last, lstm_size, rng, name=f"{name}.lstm")
        self.head = Linear(lstm_size, n_out, rng, name=f"{name}.head",
                           relu_fan=False)

    def topology(self):
        return {"kind": self.kind, "n_in": self.n_in, "fc_sizes": self.fc_sizes,
                "lstm_size": self.lstm_size, "n_out": self.n_out}

    def parameters(self):
        params = []
        for layer in self.encoder:
            params.extend(layer.parameters())
        params.extend(self.cell.parameters())
        params.extend(self.head.parameters())
        return params

    def init_state(self, batch: int = 1) -> LstmState:
        return LstmState.zeros(batch, self.lstm_size)

    def _encode(self, x: np.ndarray):
        caches = []
        for layer in self.encoder:
            x, lin_cache = layer.forward(x)
            x, mask = relu(x)
            caches.append((lin_cache, mask))
        return x, caches

    def _encode_backward(self, caches, d: np.ndarray):
        for layer, (lin_cache, mask) in zip(reversed(self.encoder), reversed(caches)):
            d = relu_backward(mask, d)
            d = layer.backward(lin_cache, d)
        return d

    def step(self, x: np.ndarray, state: LstmState):
        """Single acting step; returns (out, new_state)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        enc, _ = self._encode(x)
        h, new_state, _ = self.cell.step(enc, state)
        out, _ = self.head.forward(h)
        return out, new_state

    def forward_sequence(self, xs: np.ndarray, mask: np.ndarray | None = None):
        """Run (batch, length, n_in) windows from a zero state.

        ``mask`` (batch, length) marks valid rows; masked-out rows leave the
        recurrent state untouched, so left padding never perturbs it.
        Returns (outputs (batch, length, n_out), cache).
        """
        xs = np.asarray(xs, dtype=np.float64)
        batch, length, _ = xs.shape
        state = self.init_state(batch)
        outs = np.empty((batch, length, self.n_out))
        caches = []
        for t in range(length):
            enc, enc_cache = self._encode(xs[:, t])
            h_new, new_state, cell_cache = self.cell.step(enc, state)
            if mask is not None:
                m = mask[:, t][:, None]
                h = m * h_new + (1.0 - m) * state.h
                c = m * new_state.c + (1.0 - m) * state.c
                prev_state = state
                state = LstmState(h=h, c=c)
            else:
                m, prev_state = None, state
                state = new_state
            out, head_cache = self.head.forward(state.h)
            outs[:, t] = out
            caches.append((enc_cache, cell_cache, head_cache, m, prev_state))
        return outs, caches

    def backward_sequence(self, caches, d_outs: np.ndarray,
                          mask: np.ndarray | None = None):
        """Truncated BPTT over one window batch (gradient accumulation)."""
        batch = d_outs.shape[0]
        d_h = np.zeros((batch, self.lstm_size))
        d_c = np.zeros_like(d_h)
        for t in range(len(caches) - 1, -1, -1):
            enc_cache, cell_cache, head_cache, m, _prev = caches[t]
            d_h = d_h + self.head.backward(head_cache, d_outs[:, t])
            if m is not None:
                d_h_new, d_h_pass = m * d_h, (1.0 - m) * d_h
                d_c_new, d_c_pass = m * d_c, (1.0 - m) * d_c
            else:
                d_h_new, d_h_pass = d_h, 0.0
                d_c_new, d_c_pass = d_c, 0.0
            d_enc, d_h_prev, d_c_prev = self.cell.step_backward(
                cell_cache, d_h_new, d_c_new)
            self._encode_backward(enc_cache, d_enc)
            d_h = d_h_prev + d_h_pass
            d_c = d_c_prev + d_c_pass
