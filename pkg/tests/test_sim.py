import numpy as np
import pytest

from siva.physics import duffing_model
from siva.signal import TimeSeries
from siva.sim import (
    IntegrationError,
    IvpConfig,
    Trajectory,
    displacement_mse,
    integrate_rk45,
    interp_force,
)

DUFFING_TRUTH = {"b": 0.5, "b_nl": 4000.0, "k": 300.0, "k_nl": 3e8}


def harmonic_model():
    model = duffing_model(1.0)
    return model, model.parameter_set({"b": 0.0, "b_nl": 0.0, "k": 1.0, "k_nl": 0.0})


class TestIntegration:
    def test_harmonic_oscillator_accuracy(self):
        model, params = harmonic_model()
        t = np.linspace(0.0, 10.0, 2001)
        traj = integrate_rk45(model, params, np.array([1.0, 0.0]), t)
        assert np.max(np.abs(traj.displacements[:, 0] - np.cos(t))) < 1e-6

    def test_zero_dynamics_constant(self):
        model = duffing_model(1.0)
        params = model.parameter_set({"b": 0.0, "b_nl": 0.0, "k": 0.0, "k_nl": 0.0})
        t = np.linspace(0.0, 1.0, 101)
        traj = integrate_rk45(model, params, np.zeros(2), t)
        assert np.all(traj.states == 0.0)
        assert np.all(traj.accelerations == 0.0)

    def test_rerun_bit_identical(self):
        model = duffing_model(0.05)
        params = model.parameter_set(DUFFING_TRUTH)
        t = np.arange(0, 2001) / 10_000.0
        a = integrate_rk45(model, params, np.array([0.0, 5.0]), t)
        b = integrate_rk45(model, params, np.array([0.0, 5.0]), t)
        assert np.array_equal(a.states, b.states)

    def test_tolerance_monotonicity(self):
        model, params = harmonic_model()
        t = np.linspace(0.0, 10.0, 501)
        errs = []
        for tol in (1e-5, 1e-6, 1e-7, 1e-8):
            traj = integrate_rk45(model, params, np.array([1.0, 0.0]), t,
                                  config=IvpConfig(rel_tol=tol, abs_tol=tol))
            errs.append(np.max(np.abs(traj.displacements[:, 0] - np.cos(t))))
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))

    def test_energy_drift_undamped(self):
        m = 0.05
        model = duffing_model(m)
        params = model.parameter_set({"b": 0.0, "b_nl": 0.0, "k": 300.0, "k_nl": 3e8})
        t = np.arange(0, 10_001) / 10_000.0
        traj = integrate_rk45(model, params, np.array([0.0, 5.0]), t)
        x = traj.displacements[:, 0]
        xd = traj.velocities[:, 0]
        energy = 0.5 * m * xd**2 + 0.5 * 300.0 * x**2 + 0.25 * 3e8 * x**4
        assert np.max(np.abs(energy - energy[0])) / energy[0] < 1e-6

    def test_divergent_dynamics_raise(self):
        model = duffing_model(0.05)
        params = model.parameter_set(
            {"b": -50.0, "b_nl": 0.0, "k": 300.0, "k_nl": 0.0}
        )
        t = np.linspace(0.0, 50.0, 501)
        with pytest.raises(IntegrationError):
            integrate_rk45(model, params, np.array([0.0, 5.0]), t)

    def test_eval_budget_guard(self):
        model = duffing_model(0.05)
        params = model.parameter_set(DUFFING_TRUTH)
        t = np.arange(0, 10_001) / 10_000.0
        with pytest.raises(IntegrationError):
            integrate_rk45(model, params, np.array([0.0, 5.0]), t,
                           config=IvpConfig(max_derivative_evals=50))

    def test_bad_grid_rejected(self):
        model, params = harmonic_model()
        with pytest.raises(ValueError):
            integrate_rk45(model, params, np.array([1.0, 0.0]), np.array([0.0, 0.0]))

    def test_forced_response(self):
        # constant force on a mass: x = F t^2 / (2 m) while force is active
        model = duffing_model(2.0)
        params = model.parameter_set({"b": 0.0, "b_nl": 0.0, "k": 0.0, "k_nl": 0.0})
        force = TimeSeries(np.full(201, 4.0), 100.0)
        t = np.linspace(0.0, 1.0, 101)
        traj = integrate_rk45(model, params, np.zeros(2), t, force=force)
        assert traj.displacements[-1, 0] == pytest.approx(4.0 / (2 * 2.0), rel=1e-6)


class TestInterpForce:
    def force(self):
        return TimeSeries(np.array([[10.0], [20.0], [5.0]]), 1.0, start_time=1.0)

    def test_exact_on_knots(self):
        f = self.force()
        assert interp_force(f, 2.0)[0] == 20.0

    def test_linear_midpoint(self):
        f = self.force()
        assert interp_force(f, 1.5)[0] == 15.0

    def test_zero_beyond_cutoff(self):
        f = self.force()
        assert interp_force(f, 2.5, cutoff=2.2)[0] == 0.0
        assert interp_force(f, 10.0)[0] == 0.0

    def test_zero_before_support(self):
        assert interp_force(self.force(), 0.5)[0] == 0.0

    def test_continuity_inside_support(self):
        f = TimeSeries(np.sin(np.pi * np.linspace(0, 1, 50)).reshape(-1, 1), 49.0)
        ts = np.linspace(0.001, 0.99, 500)
        vals = interp_force(f, ts)[:, 0]
        assert np.max(np.abs(np.diff(vals))) < 0.1


class TestDisplacementMse:
    def test_equal_is_zero(self):
        t = np.linspace(0, 1, 11)
        disp = np.random.default_rng(0).standard_normal((11, 1))
        traj = Trajectory(t, np.column_stack([disp, disp]), disp)
        assert displacement_mse(t, disp, traj) == 0.0

    def test_unit_offset(self):
        t = np.array([0.0, 1.0])
        measured = np.zeros((2, 1))
        sim = np.ones((2, 1))
        traj = Trajectory(t, np.column_stack([sim, sim]), sim)
        assert displacement_mse(t, measured, traj) == 1.0

    def test_sums_over_dofs(self):
        t = np.array([0.0, 1.0])
        measured = np.zeros((2, 2))
        sim = np.ones((2, 2))
        traj = Trajectory(t, np.column_stack([sim, sim]), sim)
        assert displacement_mse(t, measured, traj) == 2.0

    def test_grid_mismatch_rejected(self):
        t = np.array([0.0, 1.0])
        disp = np.zeros((2, 1))
        traj = Trajectory(t + 0.5, np.zeros((2, 2)), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            displacement_mse(t, disp, traj)
