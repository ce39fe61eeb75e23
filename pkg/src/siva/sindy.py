"""Sparse-regression baseline: sequentially thresholded least squares over
a user-declared candidate-function library.

Term grammar (per DOF index i): `q<i>` displacement, `v<i>` velocity,
optional `^p` powers, products joined with `*`, and a relative-displacement
power `(q<i>-q<j>)^p`. Examples: "q0", "q0^3", "q0^2*v0", "(q0-q1)^3".
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .physics import GenericTerm

_FACTOR = re.compile(
    r"^(?:(?P<kind>[qv])(?P<idx>\d+)|\(q(?P<i>\d+)-q(?P<j>\d+)\))(?:\^(?P<pow>\d+))?$"
)


@dataclass(frozen=True)
class LibraryTerm:
    """One candidate function: monomial powers per DOF plus an optional
    (q_i - q_j)^p factor."""

    q_powers: tuple
    qd_powers: tuple
    rel: tuple | None = None  # (i, j, power)
    label: str = ""

    def evaluate(self, disp: np.ndarray, vel: np.ndarray) -> np.ndarray:
        col = np.ones(disp.shape[0])
        for i, p in enumerate(self.q_powers):
            if p:
                col = col * disp[:, i] ** p
        for i, p in enumerate(self.qd_powers):
            if p:
                col = col * vel[:, i] ** p
        if self.rel is not None:
            i, j, p = self.rel
            col = col * (disp[:, i] - disp[:, j]) ** p
        return col


def parse_term(text: str, dof: int) -> LibraryTerm:
    q_powers = [0] * dof
    qd_powers = [0] * dof
    rel = None
    for factor in text.replace(" ", "").split("*"):
        m = _FACTOR.match(factor)
        if not m:
            raise ValueError(f"cannot parse library term factor {factor!r}")
        power = int(m.group("pow") or 1)
        if m.group("kind"):
            idx = int(m.group("idx"))
            if idx >= dof:
                raise ValueError(f"state index {idx} out of range in {text!r}")
            if m.group("kind") == "q":
                q_powers[idx] += power
            else:
                qd_powers[idx] += power
        else:
            i, j = int(m.group("i")), int(m.group("j"))
            if i >= dof or j >= dof:
                raise ValueError(f"state index out of range in {text!r}")
            if rel is not None:
                raise ValueError("only one relative-displacement factor per term")
            rel = (i, j, power)
    return LibraryTerm(tuple(q_powers), tuple(qd_powers), rel, text)


def build_library(disp: np.ndarray, vel: np.ndarray, terms) -> np.ndarray:
    """Column j = term j evaluated at every sample."""
    if not terms:
        raise ValueError("library needs at least one term")
    disp = np.atleast_2d(np.asarray(disp, dtype=float))
    vel = np.atleast_2d(np.asarray(vel, dtype=float))
    if not (np.all(np.isfinite(disp)) and np.all(np.isfinite(vel))):
        raise ValueError("non-finite states")
    return np.column_stack([t.evaluate(disp, vel) for t in terms])


@dataclass
class SparseModel:
    coefficients: np.ndarray  # (terms x targets)
    active: np.ndarray  # boolean mask, same shape
    threshold: float
    iterations: int
    rank_deficient: bool
    condition: float


def _masked_lstsq(theta_scaled, target, mask, col_scale):
    """LSQ on the active columns (scaled); returns unscaled coefficients."""
    coef = np.zeros(mask.size)
    if not np.any(mask):
        return coef, False
    sol, _, rank, _ = np.linalg.lstsq(theta_scaled[:, mask], target, rcond=None)
    coef[mask] = sol / col_scale[mask]
    return coef, rank < int(np.sum(mask))


def stls(theta: np.ndarray, targets: np.ndarray, threshold: float,
         max_iters: int = 10) -> SparseModel:
    """Sequentially thresholded least squares.

    Columns are max-|.|-normalized internally before the orthogonal
    (SVD-based) solve; thresholding applies to the unscaled coefficients.
    Each target column keeps its own active set. Rank deficiency is
    reported via `rank_deficient`/`condition`, with best-effort results.
    """
    theta = np.asarray(theta, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    if theta.shape[0] < theta.shape[1]:
        raise ValueError("need at least as many samples as library terms")
    if theta.shape[0] != targets.shape[0]:
        raise ValueError("theta and targets disagree on sample count")
    if threshold < 0.0:
        raise ValueError("threshold must be >= 0")

    col_scale = np.max(np.abs(theta), axis=0)
    col_scale[col_scale == 0.0] = 1.0
    theta_scaled = theta / col_scale
    n_terms, n_targets = theta.shape[1], targets.shape[1]

    coefs = np.zeros((n_terms, n_targets))
    active = np.ones((n_terms, n_targets), dtype=bool)
    deficient = False
    iterations = 0
    for it in range(max_iters):
        iterations = it + 1
        new_coefs = np.zeros_like(coefs)
        for j in range(n_targets):
            c, bad = _masked_lstsq(theta_scaled, targets[:, j], active[:, j], col_scale)
            deficient = deficient or bad
            new_coefs[:, j] = c
        new_active = np.abs(new_coefs) >= threshold
        new_coefs[~new_active] = 0.0
        if np.array_equal(new_active, active) and np.allclose(
            new_coefs, coefs, rtol=0.0, atol=0.0
        ):
            coefs = new_coefs
            break
        changed = not np.array_equal(new_active, active)
        coefs, active = new_coefs, new_active
        if not changed and it > 0:
            break
    cond = float(np.linalg.cond(theta_scaled))
    return SparseModel(coefs, active, threshold, iterations, deficient, cond)


def identify_equations(disp, vel, accel, masses, terms, threshold: float,
                       max_iters: int = 10):
    """Fit  m_r * qdd_r + sum_j c_jr * term_j = 0 (+F)  per DOF.

    Targets are mass-scaled accelerations so the recovered c carry force
    units; returned coefficients are on the equation's left-hand side
    (positive stiffness/damping for a decaying oscillator).
    """
    disp = np.atleast_2d(np.asarray(disp, dtype=float))
    vel = np.atleast_2d(np.asarray(vel, dtype=float))
    accel = np.atleast_2d(np.asarray(accel, dtype=float))
    masses = np.asarray(masses, dtype=float)
    theta = build_library(disp, vel, terms)
    targets = accel * masses
    model = stls(theta, targets, threshold, max_iters)
    eom_coefs = -model.coefficients
    equations = []
    for r in range(accel.shape[1]):
        parts = [f"{masses[r]:g}*a{r}"]
        for j, term in enumerate(terms):
            c = eom_coefs[j, r]
            if c != 0.0:
                parts.append(f"{'+' if c >= 0 else '-'} {abs(c):.6g}*{term.label}")
        equations.append(" ".join(parts) + " = 0")
    return eom_coefs, model, equations


def _binom(n: int, k: int) -> float:
    out = 1.0
    for t in range(1, k + 1):
        out = out * (n - t + 1) / t
    return out


def sparse_model_terms(terms, eom_coefs: np.ndarray):
    """Express a fitted sparse model as GenericTerm rows so it can be
    re-simulated with the standard integrator.

    Relative-displacement powers expand binomially into per-DOF monomials
    sharing one coefficient slot. Returns (names, values, generic terms).
    """
    names: list[str] = []
    values: list[float] = []
    generic: list[GenericTerm] = []
    dof = eom_coefs.shape[1]
    for r in range(dof):
        for j, term in enumerate(terms):
            c = eom_coefs[j, r]
            if c == 0.0:
                continue
            name = f"c{j}_{r}"
            names.append(name)
            values.append(float(c))
            if term.rel is None:
                generic.append(
                    GenericTerm(r, name, 1.0, term.q_powers, term.qd_powers, None)
                )
            else:
                i, k, p = term.rel
                for t in range(p + 1):
                    q_powers = list(term.q_powers)
                    q_powers[i] += p - t
                    q_powers[k] += t
                    generic.append(
                        GenericTerm(
                            r,
                            name,
                            _binom(p, t) * (-1.0) ** t,
                            tuple(q_powers),
                            term.qd_powers,
                            None,
                        )
                    )
    return names, values, tuple(generic)
