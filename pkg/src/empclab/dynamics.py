"""Nonlinear single-track vehicle model, RK4 discretization, and reference path.

State layout (index constants below):

    x = [l_x, v_x, l_y, v_y, psi, r]

with positions in the inertial frame, velocities and yaw rate in the vehicle
frame.  Controls are ``u = [T_f, beta_f]`` (front axle torque, front steering
angle); the rear axle is undriven and unsteered.  All operations are pure
functions of their arguments.

The inner kernels are numba-compiled when numba is importable (they sit on
the MPC solver's hot path) and fall back to plain numpy otherwise; both modes
run the same source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpeedError, NonFiniteStateError

try:
    from numba import njit
except ImportError:                                   # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn
        return wrap

# State vector indices.
LX, VX, LY, VY, PSI, R = 0, 1, 2, 3, 4, 5
# Control vector indices.
TF, BETA_F = 0, 1

N_STATES = 6
N_CONTROLS = 2

PATH_AMPLITUDE = 4.0
PATH_PERIOD = 100.0


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of the single-track model.

    ``c_f``/``c_r`` are cornering stiffnesses in 1/rad; the lateral tire force
    is ``C_i * mu_i * F_z,i * alpha_i``, so the conventional N/rad stiffness is
    recovered as ``C_i * mu_i * F_z,i``.  ``c_drag`` lumps air density, drag
    coefficient and frontal area into ``F_a = c_drag * v_x**2``.
    """

    m: float = 2000.0          # vehicle mass (kg)
    inertia: float = 4000.0    # yaw inertia (kg m^2)
    l_xf: float = 1.5          # CG to front axle (m)
    l_xr: float = 1.5          # CG to rear axle (m)
    c_f: float = 12.0          # front cornering stiffness (1/rad)
    c_r: float = 12.0          # rear cornering stiffness (1/rad)
    mu_f: float = 0.9          # front road friction
    mu_r: float = 0.9          # rear road friction
    wheel_radius: float = 0.3  # effective tire radius (m)
    gravity: float = 9.81      # m/s^2
    grade: float = 0.0         # road grade sigma_g (rad)
    c_drag: float = 0.4        # aerodynamic drag lump (kg/m)
    v_eps: float = 0.1         # slip angles undefined below this speed (m/s)

    def __post_init__(self):
        if min(self.m, self.inertia, self.l_xf, self.l_xr, self.wheel_radius) <= 0.0:
            raise ValueError("m, inertia, axle distances and wheel radius must be positive")
        for mu in (self.mu_f, self.mu_r):
            if not 0.0 < mu <= 2.0:
                raise ValueError(f"friction coefficient {mu} outside (0, 2]")
        vals = [getattr(self, f) for f in self.__dataclass_fields__]
        if not np.all(np.isfinite(vals)):
            raise ValueError("all vehicle parameters must be finite")

    def normal_loads(self) -> tuple[float, float]:
        """Per-wheel static normal loads (front, rear), N."""
        denom = 2.0 * (self.l_xf + self.l_xr)
        return (self.l_xf * self.m * self.gravity / denom,
                self.l_xr * self.m * self.gravity / denom)

    def packed(self) -> np.ndarray:
        """Kernel-friendly flat parameter vector."""
        return np.array([self.m, self.inertia, self.l_xf, self.l_xr,
                         self.c_f, self.c_r, self.mu_f, self.mu_r,
                         self.wheel_radius, self.gravity, self.grade,
                         self.c_drag, self.v_eps])


def vehicle_state(l_x=0.0, v_x=10.0, l_y=0.0, v_y=0.0, psi=0.0, r=0.0) -> np.ndarray:
    """Build a state vector from named components."""
    return np.array([l_x, v_x, l_y, v_y, psi, r], dtype=float)


def reference_path(l_x):
    """Lateral coordinate of the reference path at longitudinal position l_x."""
    return PATH_AMPLITUDE * np.sin(2.0 * np.pi / PATH_PERIOD * l_x)


def reference_path_slope(l_x):
    """d(reference_path)/d(l_x)."""
    w = 2.0 * np.pi / PATH_PERIOD
    return PATH_AMPLITUDE * w * np.cos(w * l_x)


def lateral_error(state: np.ndarray):
    """Signed lateral offset of the state from the reference path."""
    return state[LY] - reference_path(state[LX])


def slip_angles(state: np.ndarray, beta_f: float, params: VehicleParams) -> tuple[float, float]:
    """Front and rear slip angles (rad).

    Raises DegenerateSpeedError when v_x is at or below the configured floor.
    """
    v_x = state[VX]
    if v_x <= params.v_eps:
        raise DegenerateSpeedError(
            f"v_x={v_x:.4g} m/s <= v_eps={params.v_eps}; slip angles undefined")
    alpha_f = beta_f - np.arctan((state[VY] + params.l_xf * state[R]) / v_x)
    alpha_r = -np.arctan((state[VY] - params.l_xr * state[R]) / v_x)
    return alpha_f, alpha_r


def tire_forces(state: np.ndarray, control: np.ndarray,
                params: VehicleParams) -> tuple[float, float, float, float]:
    """Per-wheel tire forces (F_xf, F_yf, F_xr, F_yr) in the vehicle frame.

    Wheel-frame forces are F_x = T/(2R), F_y = C*mu*F_z*alpha, rotated into
    the vehicle frame by the wheel angle.  The rear axle carries no torque and
    no steering.
    """
    alpha_f, alpha_r = slip_angles(state, control[BETA_F], params)
    f_zf, f_zr = params.normal_loads()
    fbar_xf = control[TF] / (2.0 * params.wheel_radius)
    fbar_yf = params.c_f * params.mu_f * f_zf * alpha_f
    fbar_yr = params.c_r * params.mu_r * f_zr * alpha_r
    cb, sb = np.cos(control[BETA_F]), np.sin(control[BETA_F])
    f_xf = fbar_xf * cb - fbar_yf * sb
    f_yf = fbar_xf * sb + fbar_yf * cb
    return f_xf, f_yf, 0.0, fbar_yr


@njit(cache=True)
def _deriv_jac(x, u, pv, want_jac):
    """RHS of the vehicle ODE plus (optionally) its analytic Jacobians.

    Returns (ok, f, A, B); ok is False when v_x is at/below the slip floor.
    """
    a = np.zeros((6, 6))
    b = np.zeros((6, 2))
    f = np.zeros(6)
    m, inertia = pv[0], pv[1]
    l_f, l_r = pv[2], pv[3]
    c_f, c_r, mu_f, mu_r = pv[4], pv[5], pv[6], pv[7]
    radius, gravity, grade, c_drag, v_eps = pv[8], pv[9], pv[10], pv[11], pv[12]

    v_x, v_y, psi, r = x[1], x[3], x[4], x[5]
    if v_x <= v_eps:
        return False, f, a, b
    denom = 2.0 * (l_f + l_r)
    f_zf = l_f * m * gravity / denom
    f_zr = l_r * m * gravity / denom
    k_f = c_f * mu_f * f_zf
    k_r = c_r * mu_r * f_zr
    t_f, beta_f = u[0], u[1]
    cb, sb = np.cos(beta_f), np.sin(beta_f)

    q_f = (v_y + l_f * r) / v_x
    q_r = (v_y - l_r * r) / v_x
    alpha_f = beta_f - np.arctan(q_f)
    alpha_r = -np.arctan(q_r)

    fbar_xf = t_f / (2.0 * radius)
    fbar_yf = k_f * alpha_f
    fbar_yr = k_r * alpha_r
    f_xf = fbar_xf * cb - fbar_yf * sb
    f_yf = fbar_xf * sb + fbar_yf * cb
    f_yr = fbar_yr

    cpsi, spsi = np.cos(psi), np.sin(psi)
    f[0] = v_x * cpsi - v_y * spsi
    f[1] = v_y * r + (2.0 / m) * f_xf - gravity * np.sin(grade) \
        - c_drag * v_x * v_x / m
    f[2] = v_x * spsi + v_y * cpsi
    f[3] = -v_x * r + (2.0 / m) * (f_yf + f_yr)
    f[4] = r
    f[5] = (2.0 / inertia) * (l_f * f_yf - l_r * f_yr)

    if want_jac:
        s_f = 1.0 / (1.0 + q_f * q_f)
        s_r = 1.0 / (1.0 + q_r * q_r)
        # d(alpha)/d(v_x, v_y, r)
        daf0, daf1, daf2 = s_f * q_f / v_x, -s_f / v_x, -s_f * l_f / v_x
        dar0, dar1, dar2 = s_r * q_r / v_x, -s_r / v_x, s_r * l_r / v_x

        dfxf0, dfxf1, dfxf2 = -sb * k_f * daf0, -sb * k_f * daf1, -sb * k_f * daf2
        dfyf0, dfyf1, dfyf2 = cb * k_f * daf0, cb * k_f * daf1, cb * k_f * daf2
        dfyr0, dfyr1, dfyr2 = k_r * dar0, k_r * dar1, k_r * dar2

        inv2r = 1.0 / (2.0 * radius)
        dfxf_t = cb * inv2r
        dfxf_b = -fbar_xf * sb - k_f * sb - fbar_yf * cb
        dfyf_t = sb * inv2r
        dfyf_b = fbar_xf * cb + k_f * cb - fbar_yf * sb

        a[0, 1] = cpsi
        a[0, 3] = -spsi
        a[0, 4] = -v_x * spsi - v_y * cpsi
        a[1, 1] = (2.0 / m) * dfxf0 - 2.0 * c_drag * v_x / m
        a[1, 3] = r + (2.0 / m) * dfxf1
        a[1, 5] = v_y + (2.0 / m) * dfxf2
        a[2, 1] = spsi
        a[2, 3] = cpsi
        a[2, 4] = v_x * cpsi - v_y * spsi
        a[3, 1] = -r + (2.0 / m) * (dfyf0 + dfyr0)
        a[3, 3] = (2.0 / m) * (dfyf1 + dfyr1)
        a[3, 5] = -v_x + (2.0 / m) * (dfyf2 + dfyr2)
        a[4, 5] = 1.0
        a[5, 1] = (2.0 / inertia) * (l_f * dfyf0 - l_r * dfyr0)
        a[5, 3] = (2.0 / inertia) * (l_f * dfyf1 - l_r * dfyr1)
        a[5, 5] = (2.0 / inertia) * (l_f * dfyf2 - l_r * dfyr2)

        b[1, 0] = (2.0 / m) * dfxf_t
        b[1, 1] = (2.0 / m) * dfxf_b
        b[3, 0] = (2.0 / m) * dfyf_t
        b[3, 1] = (2.0 / m) * dfyf_b
        b[5, 0] = (2.0 / inertia) * l_f * dfyf_t
        b[5, 1] = (2.0 / inertia) * l_f * dfyf_b
    return True, f, a, b


@njit(cache=True)
def _rollout_jac_kernel(x0, controls, dt, pv):
    """Multi-step RK4 rollout with per-step Jacobians, fused for the solver.

    Returns (fail_index, states, phis, gammas); fail_index is -1 on success,
    else the index of the step whose rollout left the validity envelope.
    """
    p = controls.shape[0]
    states = np.zeros((p, 6))
    phis = np.zeros((p, 6, 6))
    gammas = np.zeros((p, 6, 2))
    x = x0.copy()
    for k in range(p):
        ok, x, phi, gamma = _rk4_kernel(x, controls[k], dt, pv, True)
        if not ok or not np.all(np.isfinite(x)):
            return k, states, phis, gammas
        states[k] = x
        phis[k] = phi
        gammas[k] = gamma
    return -1, states, phis, gammas


@njit(cache=True)
def _rk4_kernel(x, u, dt, pv, want_jac):
    """One RK4 step with zero-order-hold control, optionally with Jacobians."""
    eye = np.eye(6)
    ok1, f1, a1, b1 = _deriv_jac(x, u, pv, want_jac)
    ok2, f2, a2, b2 = _deriv_jac(x + 0.5 * dt * f1, u, pv, want_jac)
    ok3, f3, a3, b3 = _deriv_jac(x + 0.5 * dt * f2, u, pv, want_jac)
    ok4, f4, a4, b4 = _deriv_jac(x + dt * f3, u, pv, want_jac)
    out = x + (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
    phi = np.zeros((6, 6))
    gamma = np.zeros((6, 2))
    ok = ok1 and ok2 and ok3 and ok4
    if ok and want_jac:
        k1x, k1u = a1, b1
        k2x = a2 @ (eye + 0.5 * dt * k1x)
        k2u = a2 @ (0.5 * dt * k1u) + b2
        k3x = a3 @ (eye + 0.5 * dt * k2x)
        k3u = a3 @ (0.5 * dt * k2u) + b3
        k4x = a4 @ (eye + dt * k3x)
        k4u = a4 @ (dt * k3u) + b4
        phi = eye + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        gamma = (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    return ok, out, phi, gamma


def derivative(state: np.ndarray, control: np.ndarray,
               params: VehicleParams) -> np.ndarray:
    """Continuous-time state derivative of the single-track model."""
    ok, f, _, _ = _deriv_jac(np.asarray(state, dtype=float),
                             np.asarray(control, dtype=float),
                             params.packed(), False)
    if not ok:
        raise DegenerateSpeedError(
            f"v_x={state[VX]:.4g} m/s <= v_eps={params.v_eps}; "
            "slip angles undefined")
    return f


def derivative_with_jacobians(
        state: np.ndarray, control: np.ndarray,
        params: VehicleParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Derivative plus analytic Jacobians (f, df/dx, df/du)."""
    ok, f, a, b = _deriv_jac(np.asarray(state, dtype=float),
                             np.asarray(control, dtype=float),
                             params.packed(), True)
    if not ok:
        raise DegenerateSpeedError(
            f"v_x={state[VX]:.4g} m/s <= v_eps={params.v_eps}; "
            "slip angles undefined")
    return f, a, b


def rk4_step(deriv_fn, state: np.ndarray, control: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with zero-order-hold control.

    ``deriv_fn(state, control)`` supplies the right-hand side; this hook is
    what the test suite uses to substitute scalar reference dynamics.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    k1 = deriv_fn(state, control)
    k2 = deriv_fn(state + 0.5 * dt * k1, control)
    k3 = deriv_fn(state + 0.5 * dt * k2, control)
    k4 = deriv_fn(state + dt * k3, control)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError(f"RK4 step produced non-finite state {out}")
    return out


class VehicleModel:
    """Discrete-time vehicle model at a fixed step, as used by the OCP layer.

    The same object serves as both the plant and the controller's prediction
    model, which removes plant/model mismatch from the closed loop.
    """

    n_states = N_STATES
    n_controls = N_CONTROLS
    fused_ocp = True        # the OCP layer may use its fused vehicle kernel

    def __init__(self, params: VehicleParams, dt: float):
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.params = params
        self.dt = dt
        self._packed = params.packed()

    def _kernel_step(self, state, control, want_jac: bool):
        ok, out, phi, gamma = _rk4_kernel(
            np.asarray(state, dtype=float), np.asarray(control, dtype=float),
            self.dt, self._packed, want_jac)
        if not ok:
            raise DegenerateSpeedError(
                f"speed fell to or below v_eps={self.params.v_eps} "
                "inside an RK4 stage")
        if not np.all(np.isfinite(out)):
            raise NonFiniteStateError(f"RK4 step produced non-finite state {out}")
        return out, phi, gamma

    def step(self, state, control):
        return self._kernel_step(state, control, False)[0]

    def step_with_jacobians(self, state, control):
        return self._kernel_step(state, control, True)

    def rollout_with_jacobians(self, x0, controls):
        """Fused multi-step rollout; see _rollout_jac_kernel."""
        return _rollout_jac_kernel(np.asarray(x0, dtype=float),
                                   np.asarray(controls, dtype=float),
                                   self.dt, self._packed)

    def path_error(self, state):
        return lateral_error(state)

    def path_error_gradient(self, state):
        g = np.zeros(N_STATES)
        g[LX] = -reference_path_slope(state[LX])
        g[LY] = 1.0
        return g


def step(state: np.ndarray, control: np.ndarray, params: VehicleParams,
         dt: float) -> np.ndarray:
    """Discrete vehicle update x_{t+1} = f(x_t, u_t) via RK4."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return VehicleModel(params, dt).step(state, control)


def step_with_jacobians(
        state: np.ndarray, control: np.ndarray, params: VehicleParams,
        dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RK4 step together with d(x')/dx and d(x')/du.

    The Jacobians chain the per-stage analytic Jacobians through the four RK4
    stages, so they are exact for the discrete map (not an approximation of
    the continuous linearization).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return VehicleModel(params, dt).step_with_jacobians(state, control)
