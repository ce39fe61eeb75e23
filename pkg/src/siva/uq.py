"""Uncertainty quantification over harvested coefficient samples and the
three parameter-selection strategies:

  I   sample the trained generator N times and average,
  II  average the per-epoch harvested coefficients past a chosen epoch,
  III simulate every candidate set and keep the displacement-MSE argmin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .physics import ModelSpec, ParameterSet, decode_batch
from .sim import IntegrationError, IvpConfig, displacement_mse, integrate_rk45

# |skewness| / |excess kurtosis| beyond which a sample set is flagged as
# poorly described by a normal fit
SKEW_FLAG = 0.5
KURT_FLAG = 1.0


@dataclass(frozen=True)
class NormalFit:
    mean: float
    std: float  # maximum-likelihood (divide by n) unless fitted with ddof=1
    sample_count: int

    @property
    def degenerate(self) -> bool:
        return self.std == 0.0

    def ci95(self) -> tuple:
        half = 1.96 * self.std
        return (self.mean - half, self.mean + half)


def fit_normal(samples, ddof: int = 0) -> NormalFit:
    """Gaussian fit; MLE std by default (ddof=1 for the sample estimator)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    return NormalFit(float(np.mean(x)), float(np.std(x, ddof=ddof)), x.size)


def normality_diagnostics(samples) -> dict:
    """Sample skewness and excess kurtosis with a coarse non-normality flag."""
    x = np.asarray(samples, dtype=float).ravel()
    mu = x.mean()
    sd = x.std()
    if sd == 0.0:
        return {"skewness": 0.0, "excess_kurtosis": 0.0, "non_normal": False}
    z = (x - mu) / sd
    skew = float(np.mean(z**3))
    kurt = float(np.mean(z**4) - 3.0)
    return {
        "skewness": skew,
        "excess_kurtosis": kurt,
        "non_normal": bool(abs(skew) > SKEW_FLAG or abs(kurt) > KURT_FLAG),
    }


def pdf_grid(fit: NormalFit, points: int = 101):
    """Gaussian density on an even grid spanning the mean +- 6 std."""
    if fit.degenerate:
        raise ValueError("degenerate fit (std = 0) has no density grid")
    if points < 3:
        raise ValueError("need at least 3 grid points")
    grid = np.linspace(fit.mean - 6.0 * fit.std, fit.mean + 6.0 * fit.std, points)
    z = (grid - fit.mean) / fit.std
    dens = np.exp(-0.5 * z * z) / (fit.std * math.sqrt(2.0 * math.pi))
    return grid, dens


def parameter_posterior(samples: np.ndarray, names, points: int = 101, ddof: int = 0) -> dict:
    """Per-coefficient fits over a (samples x coefficients) matrix.

    Degenerate columns are reported as point masses without a grid.
    """
    samples = np.asarray(samples, dtype=float)
    out = {}
    for i, name in enumerate(names):
        col = samples[:, i]
        fit = fit_normal(col, ddof=ddof)
        entry = {
            "mean": fit.mean,
            "std": fit.std,
            "sample_count": fit.sample_count,
            "degenerate": fit.degenerate,
            "ci95": list(fit.ci95()),
            "diagnostics": normality_diagnostics(col),
        }
        if not fit.degenerate:
            grid, dens = pdf_grid(fit, points)
            entry["pdf"] = {"grid": grid.tolist(), "density": dens.tolist()}
        out[name] = entry
    return out


def approach_one(P: nn.Mlp, model: ModelSpec, n_samples: int, rng) -> tuple:
    """Draw n_samples noise vectors, decode, return (mean ParameterSet,
    posterior dict, decoded sample matrix)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    z = rng.standard_normal((n_samples, P.input_dim))
    raw, _ = nn.mlp_forward(P, z)
    values = decode_batch(raw, model)
    mean = ParameterSet(model.coefficient_names, values.mean(axis=0))
    posterior = (
        parameter_posterior(values, model.coefficient_names) if n_samples >= 2 else None
    )
    return mean, posterior, values


def approach_two(records, model: ModelSpec, from_epoch: int) -> tuple:
    """Average the harvested per-epoch coefficient means from `from_epoch`
    (inclusive) on. Returns (mean ParameterSet, posterior, sample matrix)."""
    if not records:
        raise ValueError("no epoch records")
    if from_epoch >= records[-1].epoch:
        raise ValueError("from_epoch is beyond the recorded history")
    names = model.coefficient_names
    rows = [r for r in records if r.epoch >= from_epoch]
    if not rows:
        raise ValueError("empty epoch slice")
    values = np.array([[r.param_mean[n] for n in names] for r in rows])
    mean = ParameterSet(names, values.mean(axis=0))
    posterior = parameter_posterior(values, names) if len(rows) >= 2 else None
    return mean, posterior, values


def approach_three(candidates, model: ModelSpec, histories, ivp: IvpConfig = IvpConfig()):
    """Simulate every candidate from each dataset's initial state and keep
    the displacement-MSE argmin (ties resolve to the lowest index).

    `histories` is a list of StateHistory; the score is the mean of the
    per-dataset MSEs. Candidates that fail to integrate score +inf and the
    sweep continues.
    """
    if len(candidates) < 1:
        raise ValueError("need at least one candidate")
    if not histories:
        raise ValueError("need at least one measured dataset")
    names = model.coefficient_names
    scores = np.empty(len(candidates))
    for i, cand in enumerate(candidates):
        params = cand if isinstance(cand, ParameterSet) else ParameterSet(names, cand)
        total = 0.0
        try:
            for h in histories:
                y0 = np.concatenate([h.disp[0], h.vel[0]])
                traj = integrate_rk45(model, params, y0, h.times, config=ivp)
                total += displacement_mse(h.times, h.disp, traj)
        except (IntegrationError, ValueError):
            scores[i] = np.inf
            continue
        scores[i] = total / len(histories)
    best = int(np.argmin(scores))
    best_params = candidates[best]
    if not isinstance(best_params, ParameterSet):
        best_params = ParameterSet(names, best_params)
    return best_params, float(scores[best]), scores.tolist()


def response_band(curves):
    """Pointwise mean and 95% band (mean +- 1.96 x MLE std) over a list of
    equally shaped (samples x channels) arrays."""
    if len(curves) < 2:
        raise ValueError("need at least 2 curves")
    arrs = [np.asarray(c, dtype=float) for c in curves]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("curves are not on a common grid")
    stack = np.stack(arrs)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    return mean, mean - 1.96 * std, mean + 1.96 * std
