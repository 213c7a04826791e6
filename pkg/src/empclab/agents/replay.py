"""Ring-buffer experience replay, uniform or prioritized, flat or windowed.

Prioritized sampling follows ``P(i) = p_i^alpha / sum_k p_k^alpha`` with
importance weights ``w_i = (1/(N * P(i)))^beta`` normalized by the batch
maximum.  New transitions enter at the running maximum priority (1 before any
update), and priorities stay strictly positive via an additive floor on the
TD error magnitude.

For recurrent agents the buffer also samples fixed-length windows: a window is
addressed by its final transition, its members are the contiguous same-episode
predecessors, and its sampling priority is the maximum member priority.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyTraceError


@dataclass(frozen=True)
class Transition:
    """One environment interaction, plus indices for sequence replay."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool
    episode_id: int
    step_index: int


class ReplayBuffer:
    """Fixed-capacity ring storage with optional prioritization."""

    def __init__(self, capacity: int, state_dim: int,
                 rng: np.random.Generator, use_per: bool = False,
                 alpha: float = 0.6, priority_eps: float = 1e-3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.rng = rng
        self.use_per = bool(use_per)
        self.alpha = float(alpha)
        self.priority_eps = float(priority_eps)
        self.size = 0
        self._next = 0
        self.max_priority = 1.0
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.episode_ids = np.full(capacity, -1, dtype=np.int64)
        self.step_indices = np.zeros(capacity, dtype=np.int64)
        self.priorities = np.zeros(capacity)

    def __len__(self) -> int:
        return self.size

    def add(self, tr: Transition):
        i = self._next
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.dones[i] = tr.done
        self.episode_ids[i] = tr.episode_id
        self.step_indices[i] = tr.step_index
        self.priorities[i] = self.max_priority
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    # -- distributions -------------------------------------------------------

    def probabilities(self) -> np.ndarray:
        """Per-transition sampling distribution over the filled slots."""
        if self.size == 0:
            raise EmptyTraceError("replay buffer is empty")
        if not self.use_per:
            return np.full(self.size, 1.0 / self.size)
        scaled = self.priorities[:self.size] ** self.alpha
        return scaled / scaled.sum()

    def window_priorities(self, length: int) -> np.ndarray:
        """Max member priority of the window ending at each filled slot."""
        size = self.size
        ends = np.arange(size)
        prio = self.priorities[:size].copy()
        contiguous = np.ones(size, dtype=bool)
        for lag in range(1, length):
            prev = (ends - lag) % self.capacity
            valid = (prev < size) \
                & (self.episode_ids[prev] == self.episode_ids[ends]) \
                & (self.step_indices[prev] == self.step_indices[ends] - lag)
            contiguous &= valid
            prio = np.where(contiguous,
                            np.maximum(prio, self.priorities[prev]), prio)
        return prio

    def window_probabilities(self, length: int) -> np.ndarray:
        if self.size == 0:
            raise EmptyTraceError("replay buffer is empty")
        if not self.use_per:
            return np.full(self.size, 1.0 / self.size)
        scaled = self.window_priorities(length) ** self.alpha
        return scaled / scaled.sum()

    def _is_weights(self, probs: np.ndarray, picked: np.ndarray,
                    beta: float) -> np.ndarray:
        w = (1.0 / (self.size * probs[picked])) ** beta
        return w / w.max()

    # -- flat sampling -------------------------------------------------------

    def sample(self, n: int, beta: float = 1.0):
        """Draw ``n`` transitions; returns (batch dict, indices, IS weights)."""
        probs = self.probabilities()
        if self.use_per:
            idx = self.rng.choice(self.size, size=n, replace=True, p=probs)
        else:
            idx = self.rng.integers(0, self.size, size=n)
        weights = self._is_weights(probs, idx, beta) if self.use_per \
            else np.ones(n)
        batch = {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "dones": self.dones[idx],
        }
        return batch, idx, weights

    # -- windowed sampling ---------------------------------------------------

    def sample_windows(self, n_windows: int, length: int, beta: float = 1.0):
        """Draw window batches for truncated-BPTT training.

        Returns (batch dict with (B, L, ...) arrays, mask (B, L),
        member slot indices (B, L), window IS weights (B,)).  Rows before a
        window's first valid member are masked out (left padding).
        """
        probs = self.window_probabilities(length)
        if self.use_per:
            ends = self.rng.choice(self.size, size=n_windows, replace=True,
                                   p=probs)
        else:
            ends = self.rng.integers(0, self.size, size=n_windows)
        weights = self._is_weights(probs, ends, beta) if self.use_per \
            else np.ones(n_windows)

        lags = np.arange(length - 1, -1, -1)           # oldest member first
        member = (ends[:, None] - lags[None, :]) % self.capacity
        valid = (member < self.size) \
            & (self.episode_ids[member] == self.episode_ids[ends][:, None]) \
            & (self.step_indices[member]
               == self.step_indices[ends][:, None] - lags[None, :])
        # Membership requires a contiguous run up to the end row.
        mask = np.logical_and.accumulate(valid[:, ::-1], axis=1)[:, ::-1]
        member = np.where(mask, member, ends[:, None])  # safe gather index

        batch = {
            "states": self.states[member],
            "actions": self.actions[member],
            "rewards": self.rewards[member],
            "next_states": self.next_states[member],
            "dones": self.dones[member],
        }
        return batch, mask.astype(float), member, weights

    # -- priority maintenance --------------------------------------------------

    def update_priorities(self, indices: np.ndarray, td_errors: np.ndarray):
        """Set priorities to |TD error| plus the positivity floor."""
        indices = np.asarray(indices)
        if indices.size and (indices.min() < 0 or indices.max() >= self.size):
            raise IndexError("priority update index out of range")
        new = np.abs(np.asarray(td_errors, dtype=float)) + self.priority_eps
        # Later duplicates win when an index repeats inside one batch.
        self.priorities[indices] = new
        if new.size:
            self.max_priority = max(self.max_priority, float(new.max()))
