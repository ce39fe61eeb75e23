"""Time integration of identified models and displacement-error scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .physics import ModelSpec, ParameterSet, eval_accel_batch


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IvpConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-8
    max_derivative_evals: int = 20_000_000

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass
class Trajectory:
    """Integrated state history on a fixed output grid.

    states columns are [q_1..q_dof, qd_1..qd_dof]; accelerations are
    re-evaluated from the model at every output sample.
    """

    times: np.ndarray
    states: np.ndarray
    accelerations: np.ndarray

    @property
    def dof(self) -> int:
        return self.accelerations.shape[1]

    @property
    def displacements(self) -> np.ndarray:
        return self.states[:, : self.dof]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, self.dof :]


def interp_force(force, t, cutoff: float | None = None):
    """Piecewise-linear force lookup, exactly zero outside [t0, cutoff].

    `force` is a TimeSeries with one channel per DOF; `t` may be a scalar
    or an array. The cutoff defaults to the last sample time.
    """
    times = force.times
    data = force.data
    if cutoff is None:
        cutoff = float(times[-1])
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((t_arr.size, data.shape[1]))
    inside = (t_arr >= times[0]) & (t_arr <= min(cutoff, times[-1]))
    if np.any(inside):
        for ch in range(data.shape[1]):
            out[inside, ch] = np.interp(t_arr[inside], times, data[:, ch])
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def integrate_rk45(model: ModelSpec, params, initial_state, t_eval,
                   force=None, force_cutoff: float | None = None,
                   config: IvpConfig = IvpConfig()) -> Trajectory:
    """Integrate the model with an adaptive Dormand-Prince 4(5) pair and
    evaluate the solution on `t_eval` via the method's dense interpolant.

    Raises IntegrationError on solver failure (step-size underflow,
    non-finite derivatives) or when the derivative-evaluation budget is
    exceeded.
    """
    values = params.values if isinstance(params, ParameterSet) else np.asarray(params, float)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 2 or np.any(np.diff(t_eval) <= 0.0):
        raise ValueError("t_eval must be a strictly increasing vector")
    y0 = np.asarray(initial_state, dtype=float)
    dof = model.dof
    if y0.shape != (2 * dof,):
        raise ValueError(f"initial state must have length {2 * dof}")

    budget = [config.max_derivative_evals]
    vrow = values.reshape(1, -1)

    def rhs(t, y):
        budget[0] -= 1
        if budget[0] < 0:
            raise IntegrationError("derivative evaluation budget exceeded")
        q = y[:dof].reshape(1, -1)
        qd = y[dof:].reshape(1, -1)
        f = None
        if force is not None:
            f = interp_force(force, t, force_cutoff).reshape(1, -1)
        acc = eval_accel_batch(model, vrow, q, qd, f)[0]
        return np.concatenate([y[dof:], acc])

    try:
        sol = solve_ivp(
            rhs,
            (float(t_eval[0]), float(t_eval[-1])),
            y0,
            method="RK45",
            t_eval=t_eval,
            rtol=config.rel_tol,
            atol=config.abs_tol,
        )
    except IntegrationError:
        raise
    except ValueError as exc:
        raise IntegrationError(str(exc)) from exc
    if not sol.success:
        raise IntegrationError(sol.message)

    states = sol.y.T
    f_all = None
    if force is not None:
        f_all = interp_force(force, t_eval, force_cutoff)
    accels = eval_accel_batch(model, vrow, states[:, :dof], states[:, dof:], f_all)
    if not np.all(np.isfinite(states)):
        raise IntegrationError("non-finite state in accepted solution")
    return Trajectory(t_eval.copy(), states, accels)


def displacement_mse(measured_times, measured_disp, simulated: Trajectory) -> float:
    """Mean over samples of the squared displacement error summed over DOFs."""
    t = np.asarray(measured_times, dtype=float)
    disp = np.asarray(measured_disp, dtype=float)
    if disp.ndim == 1:
        disp = disp.reshape(-1, 1)
    if simulated.times.shape != t.shape or not np.allclose(
        simulated.times, t, rtol=0.0, atol=1e-9 * max(1.0, abs(float(t[-1])))
    ):
        raise ValueError("simulated trajectory is not on the measurement time grid")
    if disp.shape != simulated.displacements.shape:
        raise ValueError("displacement channel mismatch")
    err = disp - simulated.displacements
    return float(np.mean(np.sum(err * err, axis=1)))
