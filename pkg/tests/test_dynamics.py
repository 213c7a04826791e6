import numpy as np
import numpy.testing as npt
import pytest

from empclab import dynamics
from empclab.dynamics import (VehicleModel, VehicleParams, derivative,
                              derivative_with_jacobians, lateral_error,
                              reference_path, rk4_step, slip_angles, step,
                              tire_forces, vehicle_state)
from empclab.errors import DegenerateSpeedError

EXP_MINUS_02 = 0.8187307530779818  # closed-form e**-0.2


def default_params(**overrides):
    return VehicleParams(**overrides)


class TestTireForces:
    def test_zero_steering_rotation_is_identity(self):
        p = default_params()
        x = vehicle_state(v_x=12.0, v_y=0.4, r=0.1)
        u = np.array([77.0, 0.0])
        f_xf, f_yf, f_xr, f_yr = tire_forces(x, u, p)
        alpha_f, _ = slip_angles(x, 0.0, p)
        f_zf, _ = p.normal_loads()
        assert f_xf == pytest.approx(77.0 / (2 * p.wheel_radius), abs=1e-12)
        assert f_yf == pytest.approx(p.c_f * p.mu_f * f_zf * alpha_f, abs=1e-12)
        assert f_xr == 0.0

    def test_symmetric_wheelbase_normal_loads(self):
        p = default_params(m=2000.0, gravity=9.81, l_xf=1.5, l_xr=1.5)
        f_zf, f_zr = p.normal_loads()
        assert f_zf == pytest.approx(4905.0, abs=1e-9)
        assert f_zr == pytest.approx(4905.0, abs=1e-9)

    def test_straight_driving_has_no_lateral_force(self):
        p = default_params()
        x = vehicle_state(v_x=10.0, v_y=0.0, r=0.0)
        _, f_yf, _, f_yr = tire_forces(x, np.zeros(2), p)
        assert f_yf == 0.0
        assert f_yr == 0.0

    def test_rotation_preserves_force_norm(self):
        p = default_params()
        rng = np.random.default_rng(42)
        for _ in range(25):
            x = vehicle_state(v_x=rng.uniform(5, 20), v_y=rng.normal(),
                              r=rng.normal() * 0.3)
            u = np.array([rng.uniform(-400, 400), rng.uniform(-0.5, 0.5)])
            f_xf, f_yf, _, _ = tire_forces(x, u, p)
            alpha_f, _ = slip_angles(x, u[1], p)
            f_zf, _ = p.normal_loads()
            wheel = np.hypot(u[0] / (2 * p.wheel_radius),
                             p.c_f * p.mu_f * f_zf * alpha_f)
            assert np.hypot(f_xf, f_yf) == pytest.approx(wheel, abs=1e-12)

    @pytest.mark.parametrize("l_xf,l_xr", [(1.5, 1.5), (1.1, 1.7), (2.0, 1.0)])
    def test_load_transfer_sums_to_weight(self, l_xf, l_xr):
        p = default_params(l_xf=l_xf, l_xr=l_xr)
        f_zf, f_zr = p.normal_loads()
        assert 2 * f_zf + 2 * f_zr == pytest.approx(p.m * p.gravity, abs=1e-9)

    def test_degenerate_speed_raises(self):
        p = default_params()
        slow = vehicle_state(v_x=0.05)
        with pytest.raises(DegenerateSpeedError):
            slip_angles(slow, 0.0, p)
        with pytest.raises(DegenerateSpeedError):
            tire_forces(slow, np.zeros(2), p)
        with pytest.raises(DegenerateSpeedError):
            derivative(slow, np.zeros(2), p)


class TestDerivative:
    def test_position_rate_aligned_heading(self):
        p = default_params()
        x = vehicle_state(v_x=13.0, v_y=0.0, psi=0.0, r=0.2)
        out = derivative(x, np.zeros(2), p)
        assert out[dynamics.LX] == pytest.approx(13.0, abs=1e-12)

    def test_force_free_cruise_holds_speed(self):
        p = default_params(grade=0.0, c_drag=0.0)
        x = vehicle_state(v_x=10.0)
        out = derivative(x, np.zeros(2), p)
        assert out[dynamics.VX] == pytest.approx(0.0, abs=1e-12)

    def test_no_lateral_motion_no_yaw_acceleration(self):
        p = default_params()
        x = vehicle_state(v_x=10.0, v_y=0.0, r=0.0)
        out = derivative(x, np.array([120.0, 0.0]), p)
        assert out[dynamics.R] == pytest.approx(0.0, abs=1e-12)

    def test_jacobians_match_finite_differences(self):
        p = default_params()
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = vehicle_state(l_x=rng.uniform(0, 100), v_x=rng.uniform(4, 18),
                              l_y=rng.normal(), v_y=rng.normal(),
                              psi=rng.normal() * 0.4, r=rng.normal() * 0.3)
            u = np.array([rng.uniform(-400, 400), rng.uniform(-0.4, 0.4)])
            f, a, b = derivative_with_jacobians(x, u, p)
            npt.assert_allclose(f, derivative(x, u, p), atol=1e-14)
            for i in range(6):
                h = 1e-6 * max(1.0, abs(x[i]))
                dx = np.zeros(6)
                dx[i] = h
                fd = (derivative(x + dx, u, p) - derivative(x - dx, u, p)) / (2 * h)
                npt.assert_allclose(a[:, i], fd, atol=1e-5, rtol=1e-5)
            for i in range(2):
                h = 1e-6 * max(1.0, abs(u[i]))
                du = np.zeros(2)
                du[i] = h
                fd = (derivative(x, u + du, p) - derivative(x, u - du, p)) / (2 * h)
                npt.assert_allclose(b[:, i], fd, atol=1e-5, rtol=1e-5)


class TestStep:
    def test_scalar_exponential_decay_oracle(self):
        # Substituted test dynamics x' = -x; one RK4 step vs the closed form.
        out = rk4_step(lambda x, u: -x, np.array([1.0]), None, 0.2)
        assert abs(out[0] - EXP_MINUS_02) < 1e-6

    def test_step_halving_local_error(self):
        p = default_params()
        x = vehicle_state(v_x=10.0, v_y=0.3, psi=0.1, r=0.1)
        u = np.array([150.0, 0.05])
        for dt in (0.2, 0.1):
            full = step(x, u, p, dt)
            half = step(step(x, u, p, dt / 2), u, p, dt / 2)
            fine = x.copy()
            for _ in range(64):
                fine = step(fine, u, p, dt / 64)
            err_full = np.max(np.abs(full - fine))
            err_half = np.max(np.abs(half - fine))
            assert err_half < err_full / 8.0

    def test_rk4_observed_order(self):
        p = default_params()
        x = vehicle_state(v_x=10.0, v_y=0.4, psi=0.2, r=0.15)
        u = np.array([200.0, 0.08])

        def integrate(dt, n):
            out = x.copy()
            for _ in range(n):
                out = step(out, u, p, dt)
            return out

        reference = integrate(0.4 / 256, 256)
        errors = [np.max(np.abs(integrate(0.4 / n, n) - reference))
                  for n in (4, 8, 16)]
        orders = [np.log2(errors[i] / errors[i + 1]) for i in range(2)]
        assert min(orders) >= 3.9

    def test_constant_velocity_advance(self):
        p = default_params(c_drag=0.0)
        x = vehicle_state(l_x=5.0, v_x=8.0)
        out = step(x, np.zeros(2), p, 0.2)
        assert out[dynamics.LX] == pytest.approx(5.0 + 8.0 * 0.2, abs=1e-12)
        assert out[dynamics.VX] == pytest.approx(8.0, abs=1e-12)

    def test_rejects_nonpositive_dt(self):
        p = default_params()
        with pytest.raises(ValueError):
            step(vehicle_state(), np.zeros(2), p, 0.0)

    def test_step_with_jacobians_matches_plain_step(self, model):
        rng = np.random.default_rng(5)
        for _ in range(5):
            x = vehicle_state(v_x=rng.uniform(5, 15), v_y=rng.normal(),
                              psi=rng.normal(), r=rng.normal() * 0.2)
            u = np.array([rng.uniform(-300, 300), rng.uniform(-0.3, 0.3)])
            out, phi, gamma = model.step_with_jacobians(x, u)
            npt.assert_array_equal(out, model.step(x, u))
            # Discrete Jacobians against finite differences of the step map.
            for i in range(6):
                h = 1e-6 * max(1.0, abs(x[i]))
                dx = np.zeros(6)
                dx[i] = h
                fd = (model.step(x + dx, u) - model.step(x - dx, u)) / (2 * h)
                npt.assert_allclose(phi[:, i], fd, atol=1e-5, rtol=1e-5)
            for i in range(2):
                h = 1e-6 * max(1.0, abs(u[i]))
                du = np.zeros(2)
                du[i] = h
                fd = (model.step(x, u + du) - model.step(x, u - du)) / (2 * h)
                npt.assert_allclose(gamma[:, i], fd, atol=1e-5, rtol=1e-5)

    def test_fused_rollout_matches_stepwise(self, model):
        rng = np.random.default_rng(11)
        x0 = vehicle_state(v_x=10.0)
        controls = rng.uniform(-1, 1, (5, 2)) * np.array([200.0, 0.2])
        fail, states, phis, gammas = model.rollout_with_jacobians(x0, controls)
        assert fail == -1
        x = x0
        for k in range(5):
            x, phi, gamma = model.step_with_jacobians(x, controls[k])
            npt.assert_array_equal(states[k], x)
            npt.assert_array_equal(phis[k], phi)
            npt.assert_array_equal(gammas[k], gamma)


class TestReferencePath:
    def test_values(self):
        assert reference_path(0.0) == 0.0
        assert reference_path(25.0) == pytest.approx(4.0, abs=1e-12)
        assert reference_path(50.0) == pytest.approx(0.0, abs=1e-12)

    def test_periodicity(self):
        xs = np.linspace(-50.0, 250.0, 301)
        assert np.max(np.abs(reference_path(xs) - reference_path(xs + 100.0))) < 1e-9

    def test_lateral_error(self):
        assert lateral_error(vehicle_state(l_x=10.0,
                                           l_y=reference_path(10.0))) == 0.0
        assert lateral_error(vehicle_state(l_x=0.0, l_y=1.0)) == 1.0
        assert lateral_error(vehicle_state(l_x=25.0, l_y=0.0)) == pytest.approx(
            -4.0, abs=1e-12)

    def test_path_error_gradient(self, model):
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = vehicle_state(l_x=rng.uniform(0, 100), l_y=rng.normal())
            g = model.path_error_gradient(x)
            for i in (dynamics.LX, dynamics.LY):
                dx = np.zeros(6)
                dx[i] = 1e-7
                fd = (model.path_error(x + dx) - model.path_error(x - dx)) / 2e-7
                assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestParamsValidation:
    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ValueError):
            VehicleParams(m=0.0)

    def test_rejects_bad_friction(self):
        with pytest.raises(ValueError):
            VehicleParams(mu_f=2.5)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            VehicleParams(c_drag=np.nan)
