"""Numerically stable categorical head over action logits."""

from __future__ import annotations

import numpy as np


def categorical_head(logits: np.ndarray):
    """Probabilities, log-probabilities and entropy from raw logits.

    Works on a single logit vector or a (batch, n) array; softmax is
    stabilized by max subtraction so large gaps cannot overflow.
    Returns (probs, log_probs, entropy).
    """
    logits = np.asarray(logits, dtype=np.float64)
    squeeze = logits.ndim == 1
    z = np.atleast_2d(logits)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    shifted = z - z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    total = expz.sum(axis=1, keepdims=True)
    probs = expz / total
    log_probs = shifted - np.log(total)
    entropy = -(probs * log_probs).sum(axis=1)
    if squeeze:
        return probs[0], log_probs[0], float(entropy[0])
    return probs, log_probs, entropy


def log_prob_grad(probs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """d log pi(a|s) / d logits for each row: one_hot(a) - probs."""
    grad = -probs.copy()
    grad[np.arange(len(actions)), actions] += 1.0
    return grad


def entropy_grad(probs: np.ndarray, log_probs: np.ndarray) -> np.ndarray:
    """d entropy / d logits for each row: -p * (log p + H)."""
    entropy = -(probs * log_probs).sum(axis=1, keepdims=True)
    return -probs * (log_probs + entropy)
