"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .params import Parameter


def grad_check(loss_and_backward, params: list[Parameter],
               rng: np.random.Generator, n_coords: int = 200,
               h: float = 1e-5) -> float:
    """Max relative error between analytic and finite-difference gradients.

    ``loss_and_backward()`` must run a deterministic forward pass, accumulate
    parameter gradients, and return the scalar loss.  A random subset of at
    least ``n_coords`` coordinates (spread over all parameter blocks) is
    probed with central differences of step ``h``.
    """
    for p in params:
        p.zero_grad()
    loss_and_backward()
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    sizes = np.array([p.value.size for p in params])
    total = int(sizes.sum())
    n = min(n_coords, total)
    picks = rng.choice(total, size=n, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for flat_index in picks:
        block = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        local = int(flat_index - offsets[block])
        view = params[block].value.reshape(-1)
        saved = view[local]
        view[local] = saved + h
        loss_plus = loss_and_backward()
        for p in params:
            p.zero_grad()
        view[local] = saved - h
        loss_minus = loss_and_backward()
        for p in params:
            p.zero_grad()
        view[local] = saved
        fd = (loss_plus - loss_minus) / (2.0 * h)
        an = analytic[block].reshape(-1)[local]
        err = abs(fd - an) / max(abs(fd), abs(an), 1.0)
        worst = max(worst, err)
    return worst
