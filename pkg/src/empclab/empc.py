"""Event-triggered execution: plan buffer, control shifting, reward, environment.

A solve event stores the optimal control/state sequences in a plan buffer.
While the trigger stays low the buffer is replayed: with ``k`` completed
non-trigger steps since the event, the next replayed control is element
``k + 1`` (0-based) of the stored sequence.  Replaying past the end of the
buffer is impossible by construction: the step that would exhaust it coerces
a forced solve, which is counted as a trigger.

The environment exposes the usual RL step interface.  Its observation is the
12-vector ``(x_hat, x_bar)``: the true vehicle state next to the buffered
prediction for the same time step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .config import EmpcConfig, OcpConfig
from .dynamics import LX, LY, VehicleModel
from .errors import EpisodeDoneError
from .ocp import OcpSolver, stage_cost, shifted_warm_start

ENV_STATE_DIM = 12


@dataclass(frozen=True)
class PlanBuffer:
    """Stored solution from the last solve event.

    ``k`` counts completed non-trigger steps since the event; the event step
    itself consumed the first stored control.  ``0 <= k <= horizon - 1`` holds
    at all times thanks to the forced-trigger rule.
    """

    controls: np.ndarray   # (p, m) optimal control sequence
    states: np.ndarray     # (p, n) predicted states, one per stored control
    k: int                 # completed non-trigger steps since the event
    t_event: float         # time of the event (s)

    def predicted_state(self) -> np.ndarray:
        """Buffered prediction aligned with the next control to be replayed."""
        return self.states[self.k]


def apply_trigger(buffer: PlanBuffer, action: int, x_hat: np.ndarray,
                  solver: OcpSolver, t_now: float, u_prev=None):
    """Resolve one trigger decision into an applied control.

    Returns ``(u, buffer', solved, forced)``.  ``action == 1`` re-solves from
    ``x_hat`` (warm-started with the shifted stored plan) and applies the first
    element of the fresh solution.  ``action == 0`` advances the buffer and
    replays the next stored element, unless the buffer would be exhausted, in
    which case a forced solve happens and ``forced`` is set.
    """
    horizon = len(buffer.controls)
    forced = False
    if action == 0:
        k_next = buffer.k + 1
        if k_next <= horizon - 1:
            new_buffer = replace(buffer, k=k_next)
            return buffer.controls[k_next], new_buffer, False, False
        forced = True

    warm = shifted_warm_start(buffer.controls, buffer.k + 1)
    solution = solver.solve(x_hat, warm_start=warm, u_prev=u_prev)
    new_buffer = PlanBuffer(controls=solution.controls, states=solution.states,
                            k=0, t_event=t_now)
    return solution.controls[0], new_buffer, True, forced


def initial_buffer(solution, x0: np.ndarray) -> PlanBuffer:
    """Prime a plan buffer from the mandatory solve at episode start.

    Replay consumes stored element ``k + 1`` after ``k`` completed non-trigger
    steps, i.e. element 0 is never replayed (the solve event itself applies
    it).  At reset no control has been applied yet, so the fresh solution is
    stored shifted one slot right, with the anchor state in slot 0: the first
    coast step then applies exactly the control the solver chose for the
    current state, and the buffered prediction for the current time is the
    anchor itself.
    """
    controls = np.vstack([solution.controls[:1], solution.controls[:-1]])
    states = np.vstack([np.asarray(x0, dtype=float)[None, :],
                        solution.states[:-1]])
    return PlanBuffer(controls=controls, states=states, k=0, t_event=0.0)


def reward(x_hat, control, action: int, rho_c: float, dt: float,
           config: OcpConfig) -> float:
    """Per-step reward: negative stage cost integral minus the trigger price."""
    return -stage_cost(x_hat, control, config) * dt - rho_c * action


def threshold_policy(buffer: PlanBuffer, x_hat: np.ndarray,
                     threshold: float) -> int:
    """Trigger when the position deviates from the buffered prediction.

    The deviation is the Euclidean distance between actual and predicted
    ``(l_x, l_y)``; a tie at exactly the threshold does not trigger.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    predicted = buffer.predicted_state()
    dev = np.hypot(x_hat[LX] - predicted[LX], x_hat[LY] - predicted[LY])
    return 1 if dev > threshold else 0


class TriggerEnv:
    """Vehicle path-following with event-triggered MPC as an RL environment.

    One instance is single-threaded; run independent instances (distinct RNG
    streams) for parallel evaluation.  Every reset re-solves once at the
    initial state so the plan buffer is always defined.
    """

    def __init__(self, model: VehicleModel, ocp_config: OcpConfig,
                 empc_config: EmpcConfig, rho_c: float, episode_steps: int,
                 rng: np.random.Generator | None = None,
                 record_trace: bool = False):
        self.model = model
        self.ocp_config = ocp_config
        self.empc_config = empc_config
        self.rho_c = float(rho_c)
        self.episode_steps = int(episode_steps)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.record_trace = record_trace
        self.solver = OcpSolver(model, ocp_config)
        self.buffer: PlanBuffer | None = None
        self.x: np.ndarray | None = None
        self.t_step = 0
        self.done = True
        self.last_u = None
        self.trace: list[tuple] = []
        self.solve_seconds = 0.0

    @property
    def dt(self) -> float:
        return self.model.dt

    def _timed_solver(self):
        env = self

        class _Timed:
            def solve(self, x_hat, warm_start=None, u_prev=None):
                return env._solve(x_hat, warm_start, u_prev)

        return _Timed()

    def _solve(self, x, warm, u_prev):
        start = time.perf_counter()
        solution = self.solver.solve(x, warm_start=warm, u_prev=u_prev)
        self.solve_seconds += time.perf_counter() - start
        return solution

    def observation(self) -> np.ndarray:
        return np.concatenate([self.x, self.buffer.predicted_state()])

    def reset(self) -> np.ndarray:
        x = self.empc_config.x0.copy()
        jitter = self.empc_config.x0_jitter
        if np.any(jitter):
            x = x + jitter * self.rng.uniform(-1.0, 1.0, size=x.shape)
        self.x = x
        self.t_step = 0
        self.done = False
        self.last_u = None
        self.trace = []
        self.solve_seconds = 0.0
        solution = self._solve(x, None, None)
        self.buffer = initial_buffer(solution, x)
        return self.observation()

    def step(self, action: int):
        """Apply a trigger decision; returns ``(obs, reward, done, info)``."""
        if self.done:
            raise EpisodeDoneError("episode is over; call reset() first")
        action = int(action)
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action}")

        t_now = self.t_step * self.dt
        solve_before = self.solve_seconds
        u, self.buffer, solved, forced = apply_trigger(
            self.buffer, action, self.x, self._timed_solver(), t_now,
            u_prev=self.last_u)

        a_effective = 1 if solved else 0
        ell = stage_cost(self.x, u, self.ocp_config,
                         path_error=self.model.path_error)
        rew = -ell * self.dt - self.rho_c * a_effective

        if self.record_trace:
            self.trace.append((t_now, self.x.copy(), u.copy(), a_effective,
                               int(forced), rew, ell))

        self.x = self.model.step(self.x, u)
        self.last_u = u
        self.t_step += 1
        self.done = self.t_step >= self.episode_steps
        info = {"solved": solved, "forced": forced, "stage_cost": ell,
                "control": u,
                "solve_seconds": self.solve_seconds - solve_before}
        return self.observation(), rew, self.done, info
