"""Finite-horizon constrained optimal control over the discrete vehicle model.

The problem is solved by direct single shooting: the decision variable is the
flat control sequence, gradients come from a reverse sweep of the chain rule
through the RK4 rollout, box bounds on controls are handled by a projected
quasi-Newton inner solver, and rate/state constraints by a ramped quadratic
penalty (feasibility is restored exactly by a final clamp pass).

Internally the solver optimizes half-range-scaled controls (torque and
steering live three orders of magnitude apart) and normalizes constraint
violations the same way; the first-order criterion is the infinity norm of
the projected gradient in scaled variables.

The solver is generic over any model exposing ``step``,
``step_with_jacobians``, ``path_error`` and ``path_error_gradient``;
the vehicle model is the default, scalar test models plug into the same slot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .config import OcpConfig
from .dynamics import (PATH_AMPLITUDE, PATH_PERIOD, _rk4_kernel, lateral_error,
                       njit)
from .errors import DegenerateSpeedError, LengthMismatchError, NonFiniteStateError

log = logging.getLogger(__name__)

# Objective value returned for control sequences whose rollout leaves the
# model's validity envelope; steep enough that the line search backs off.
_INVALID_ROLLOUT_COST = 1e9


@njit(cache=True)
def _fused_vehicle_objective(u_flat, x0, weight, u_prev, has_uprev, pv, dt,
                             q_t, q_u, u_ref, du_min, du_max, du_scale,
                             x_min, x_max):
    """Single-kernel rollout + cost + reverse-sweep gradient for the vehicle.

    Mirrors the generic Python objective exactly (same terms, same invalid
    rollout convention); exists because this is the hot path of every solve.
    """
    p = u_flat.shape[0] // 2
    controls = u_flat.reshape(p, 2)
    states = np.zeros((p, 6))
    phis = np.zeros((p, 6, 6))
    gammas = np.zeros((p, 6, 2))
    x = x0.copy()
    for k in range(p):
        ok, x, phi, gamma = _rk4_kernel(x, controls[k], dt, pv, True)
        if not ok or not np.all(np.isfinite(x)):
            return _INVALID_ROLLOUT_COST * (1.0 + p - k), np.zeros(p * 2)
        states[k] = x
        phis[k] = phi
        gammas[k] = gamma

    cost = 0.0
    stage_grads = np.zeros((p, 6))
    omega = 2.0 * np.pi / PATH_PERIOD
    for k in range(p):
        err = states[k, 2] - PATH_AMPLITUDE * np.sin(omega * states[k, 0])
        cost += q_t * err * err
        stage_grads[k, 0] = -2.0 * q_t * err * PATH_AMPLITUDE * omega \
            * np.cos(omega * states[k, 0])
        stage_grads[k, 2] = 2.0 * q_t * err
        for i in range(6):
            hi = states[k, i] - x_max[i]
            lo = x_min[i] - states[k, i]
            if hi > 0.0:
                cost += weight * hi * hi
                stage_grads[k, i] += 2.0 * weight * hi
            if lo > 0.0:
                cost += weight * lo * lo
                stage_grads[k, i] -= 2.0 * weight * lo

    grad_u = np.zeros((p, 2))
    for k in range(p):
        d0 = controls[k, 0] - u_ref[0]
        d1 = controls[k, 1] - u_ref[1]
        cost += d0 * (q_u[0, 0] * d0 + q_u[0, 1] * d1) \
            + d1 * (q_u[1, 0] * d0 + q_u[1, 1] * d1)
        grad_u[k, 0] = 2.0 * (q_u[0, 0] * d0 + q_u[0, 1] * d1)
        grad_u[k, 1] = 2.0 * (q_u[1, 0] * d0 + q_u[1, 1] * d1)

    for j in range(0 if has_uprev else 1, p):
        for i in range(2):
            d = controls[j, i] - (u_prev[i] if j == 0 else controls[j - 1, i])
            viol = 0.0
            if d > du_max[i]:
                viol = d - du_max[i]
            elif d < du_min[i]:
                viol = d - du_min[i]
            if viol != 0.0:
                s2 = du_scale[i] * du_scale[i]
                cost += weight * viol * viol / s2
                gd = 2.0 * weight * viol / s2
                grad_u[j, i] += gd
                if j > 0:
                    grad_u[j - 1, i] -= gd

    lam = stage_grads[p - 1].copy()
    for k in range(p - 1, -1, -1):
        grad_u[k] += gammas[k].T @ lam
        if k > 0:
            lam = phis[k].T @ lam + stage_grads[k - 1]
    return cost, grad_u.ravel()


@dataclass
class OcpSolution:
    """Optimal control/state sequences and solve diagnostics."""

    controls: np.ndarray          # (p, m), one row per step k = 0..p-1
    states: np.ndarray            # (p, n), rollout x_{t+1}..x_{t+p}
    cost: float                   # achieved objective (no penalty terms)
    converged: bool               # first-order criterion met on final loop
    iterations: int               # accepted inner iterations, all loops
    inner_costs: list = field(default_factory=list)  # per loop, when recorded


def stage_cost(state, control, config: OcpConfig, path_error=lateral_error) -> float:
    """Quadratic penalty on path error plus control effort for one step."""
    err = path_error(state)
    du = np.asarray(control, dtype=float) - config.u_ref
    return config.q_t * err * err + float(du @ config.q_u @ du)


def trajectory_cost(states, controls, config: OcpConfig,
                    path_error=lateral_error) -> float:
    """Total objective: tracking over states k=1..p, effort over controls k=0..p-1."""
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if len(states) != config.horizon or len(controls) != config.horizon:
        raise LengthMismatchError(
            f"expected {config.horizon} states and controls, "
            f"got {len(states)} and {len(controls)}")
    track = sum(config.q_t * path_error(x) ** 2 for x in states)
    du = controls - config.u_ref
    effort = float(np.einsum("ki,ij,kj->", du, config.q_u, du))
    return float(track) + effort


def rollout(x0, controls, model) -> np.ndarray:
    """Roll the model forward: states[k] = f(states[k-1], controls[k])."""
    controls = np.asarray(controls, dtype=float)
    states = np.empty((len(controls), model.n_states))
    x = np.asarray(x0, dtype=float)
    for k, u in enumerate(controls):
        x = model.step(x, u)
        states[k] = x
    return states


def _half_range(lo, hi):
    scale = 0.5 * (np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float))
    return np.where(np.isfinite(scale) & (scale > 0.0), scale, 1.0)


class OcpSolver:
    """Direct-shooting solver for one model/config pair.

    Instances hold no per-solve state beyond scratch arrays inside ``solve``,
    so concurrent solves on distinct inputs are safe.
    """

    def __init__(self, model, config: OcpConfig, record_iterates: bool = False):
        self.model = model
        self.config = config
        self.record_iterates = record_iterates
        p, m = config.horizon, model.n_controls
        self._shape = (p, m)
        self._u_scale = _half_range(config.u_min, config.u_max)
        self._du_scale = _half_range(config.du_min, config.du_max)
        self._use_fused = bool(getattr(model, "fused_ocp", False))
        self._scale_flat = np.tile(self._u_scale, p)
        self._lb = np.tile(config.u_min / self._u_scale, p)
        self._ub = np.tile(config.u_max / self._u_scale, p)
        self._bounds = list(zip(self._lb, self._ub))

    # -- objective -----------------------------------------------------------

    def _value_and_grad(self, u_flat, x0, weight, u_prev):
        """Penalized objective and its gradient w.r.t. the flat control sequence.

        Rate violations are normalized by the half range of their bound, so
        the penalty is equally stiff in every direction; state-box violations
        use raw units (those bounds mark the validity envelope).  Dispatches
        to the fused kernel for models that advertise it.
        """
        cfg = self.config
        if self._use_fused:
            n = self.model.n_states
            has_uprev = u_prev is not None
            up = np.asarray(u_prev, dtype=float) if has_uprev else np.zeros(2)
            return _fused_vehicle_objective(
                np.ascontiguousarray(u_flat), x0, weight, up, has_uprev,
                self.model._packed, self.model.dt, cfg.q_t, cfg.q_u,
                cfg.u_ref, cfg.du_min, cfg.du_max, self._du_scale,
                cfg.x_min[:n], cfg.x_max[:n])
        p, m = self._shape
        controls = u_flat.reshape(p, m)
        n = self.model.n_states

        fused = getattr(self.model, "rollout_with_jacobians", None)
        if fused is not None:
            fail, states, phis, gammas = fused(x0, controls)
            if fail >= 0:
                # Trial sequence left the validity envelope; penalize harder
                # the earlier it failed and let the line search retreat.
                return _INVALID_ROLLOUT_COST * (1.0 + p - fail), np.zeros(p * m)
        else:
            states = np.empty((p, n))
            phis = np.empty((p, n, n))
            gammas = np.empty((p, n, m))
            x = x0
            for k in range(p):
                try:
                    x, phis[k], gammas[k] = self.model.step_with_jacobians(
                        x, controls[k])
                except (DegenerateSpeedError, NonFiniteStateError):
                    return (_INVALID_ROLLOUT_COST * (1.0 + p - k),
                            np.zeros(p * m))
                states[k] = x

        cost = 0.0
        stage_grads = np.empty((p, n))
        for k in range(p):
            err = self.model.path_error(states[k])
            cost += cfg.q_t * err * err
            g = (2.0 * cfg.q_t * err) * self.model.path_error_gradient(states[k])
            hi = np.maximum(states[k] - cfg.x_max[:n], 0.0)
            lo = np.maximum(cfg.x_min[:n] - states[k], 0.0)
            if hi.any() or lo.any():
                cost += weight * float(hi @ hi + lo @ lo)
                g = g + 2.0 * weight * (hi - lo)
            stage_grads[k] = g

        du = controls - cfg.u_ref
        cost += float(np.einsum("ki,ij,kj->", du, cfg.q_u, du))
        grad_u = 2.0 * du @ cfg.q_u

        # Rate-of-change penalty, including the step back to the previously
        # applied control when one is known.
        diffs = np.diff(controls, axis=0)
        if u_prev is not None:
            first = (controls[0] - u_prev)[None, :]
            diffs = np.vstack([first, diffs]) if p > 1 else first
        hi = np.maximum(diffs - cfg.du_max, 0.0)
        lo = np.maximum(cfg.du_min - diffs, 0.0)
        if hi.any() or lo.any():
            ds2 = self._du_scale * self._du_scale
            cost += weight * float(np.sum((hi * hi + lo * lo) / ds2))
            gd = 2.0 * weight * (hi - lo) / ds2
            offset = 1 if u_prev is not None else 0
            for j in range(len(diffs)):
                k = j + 1 - offset          # diff j couples controls[k-1] -> controls[k]
                grad_u[k] += gd[j]
                if k > 0:
                    grad_u[k - 1] -= gd[j]

        # Reverse sweep: accumulate d(stage costs)/d(controls).
        lam = stage_grads[p - 1]
        for k in range(p - 1, -1, -1):
            grad_u[k] += gammas[k].T @ lam
            if k > 0:
                lam = phis[k].T @ lam + stage_grads[k - 1]

        return cost, grad_u.ravel()

    def _scaled_value_and_grad(self, u_scaled, x0, weight, u_prev):
        cost, grad = self._value_and_grad(u_scaled * self._scale_flat,
                                          x0, weight, u_prev)
        return cost, grad * self._scale_flat

    # -- feasibility ---------------------------------------------------------

    def _clamp_rates(self, controls, u_prev):
        """Forward pass restoring exact box and rate feasibility."""
        cfg = self.config
        out = np.clip(controls, cfg.u_min, cfg.u_max)
        prev = u_prev
        for k in range(len(out)):
            if prev is not None:
                lo = np.maximum(cfg.u_min, prev + cfg.du_min)
                hi = np.minimum(cfg.u_max, prev + cfg.du_max)
                out[k] = np.clip(out[k], lo, hi)
            prev = out[k]
        return out

    def _states_in_box(self, x0, controls) -> bool:
        n = self.model.n_states
        try:
            states = rollout(x0, controls, self.model)
        except (DegenerateSpeedError, NonFiniteStateError):
            return False
        return bool(np.all(states >= self.config.x_min[:n])
                    and np.all(states <= self.config.x_max[:n]))

    def _is_feasible(self, controls, u_prev, tol=1e-12):
        cfg = self.config
        if np.any(controls < cfg.u_min - tol) or np.any(controls > cfg.u_max + tol):
            return False
        diffs = np.diff(controls, axis=0)
        if u_prev is not None and len(controls):
            diffs = np.vstack([controls[0] - u_prev, diffs])
        return not (np.any(diffs < cfg.du_min - tol) or np.any(diffs > cfg.du_max + tol))

    # -- solve ---------------------------------------------------------------

    def solve(self, x_hat, warm_start=None, u_prev=None) -> OcpSolution:
        """Solve the OCP from state estimate ``x_hat``.

        ``warm_start`` is a (p, m) control sequence (typically the shifted
        previous solution); ``u_prev`` anchors the first rate constraint to
        the control applied at the previous step.
        """
        cfg = self.config
        p, m = self._shape
        x0 = np.asarray(x_hat, dtype=float)
        if not np.all(np.isfinite(x0)):
            raise ValueError(f"initial state must be finite, got {x0}")

        if warm_start is None:
            u = np.zeros((p, m))
        else:
            u = np.array(warm_start, dtype=float).reshape(p, m)
        u = np.clip(u, cfg.u_min, cfg.u_max)
        u_scaled = (u / self._u_scale).ravel()
        scale_flat = self._scale_flat

        total_iters = 0
        converged = False
        inner_costs = []
        for loop in range(cfg.outer_loops):
            weight = cfg.penalty_init * cfg.penalty_ramp ** loop
            trace = []
            callback = None
            if self.record_iterates or cfg.verbose:
                def callback(uk, _w=weight, _t=trace):
                    _t.append(self._scaled_value_and_grad(uk, x0, _w, u_prev)[0])
                trace.append(self._scaled_value_and_grad(
                    u_scaled, x0, weight, u_prev)[0])
            res = minimize(
                self._scaled_value_and_grad, u_scaled,
                args=(x0, weight, u_prev),
                jac=True, method="L-BFGS-B", bounds=self._bounds,
                callback=callback,
                options={"maxiter": cfg.max_inner_iters, "maxcor": 8,
                         "gtol": cfg.pg_tol, "ftol": 1e-12})
            u_scaled = res.x
            total_iters += res.nit
            if self.record_iterates or cfg.verbose:
                inner_costs.append(trace)
                if cfg.verbose:
                    for i, c in enumerate(trace):
                        log.debug("outer %d iter %d penalized cost %.12g",
                                  loop, i, c)

            grad = self._scaled_value_and_grad(u_scaled, x0, weight, u_prev)[1]
            pg = u_scaled - np.clip(u_scaled - grad, self._lb, self._ub)
            converged = bool(np.max(np.abs(pg)) < cfg.pg_tol)
            u = (u_scaled * scale_flat).reshape(p, m)
            # All penalty terms are exactly zero at this iterate: ramping the
            # weight changes neither the objective nor the optimum.
            if self._is_feasible(u, u_prev, tol=0.0) \
                    and self._states_in_box(x0, u):
                break

        u = self._clamp_rates(u, u_prev)
        states = rollout(x0, u, self.model)
        cost = trajectory_cost(states, u, cfg, path_error=self.model.path_error)

        if warm_start is not None:
            w = np.array(warm_start, dtype=float).reshape(p, m)
            if self._is_feasible(w, u_prev):
                w_states = rollout(x0, w, self.model)
                w_cost = trajectory_cost(w_states, w, cfg,
                                         path_error=self.model.path_error)
                if w_cost < cost:
                    u, states, cost, converged = w, w_states, w_cost, False

        return OcpSolution(controls=u, states=states, cost=float(cost),
                           converged=converged, iterations=total_iters,
                           inner_costs=inner_costs)


def shifted_warm_start(controls: np.ndarray, steps: int) -> np.ndarray:
    """Shift a control sequence by ``steps`` and pad by repeating the tail."""
    p = len(controls)
    steps = min(max(int(steps), 0), p)
    if steps == 0:
        return np.array(controls, dtype=float)
    return np.vstack([controls[steps:], np.repeat(controls[-1:], steps, axis=0)])
