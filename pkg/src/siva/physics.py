"""Equation-of-motion models: acceleration evaluation and coefficient gradients.

A model owns the assumed form of the dynamics and the list of coefficients
to identify (masses are measured inputs, never identified). Accelerations
follow the solved-for form

    qdd = (F - damping - stiffness) / m     (per degree of freedom)

and every model provides the analytic jacobian of qdd with respect to the
identified coefficients so losses over generated accelerations can be
backpropagated into the parameter-generator network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODEL_KINDS = ("duffing", "coupled_power_law", "generic")
ENCODINGS = ("direct", "sci")

# Exponent magnitude above which a*10^b decoding is refused (overflow guard).
MAX_DECADE_EXPONENT = 300.0

# Floor on |relative displacement| inside log(): the power-law term itself
# vanishes faster than log diverges, so flooring is numerically safe.
REL_DISP_FLOOR = 1e-12

DUFFING_COEFFS = ("b", "b_nl", "k", "k_nl")
COUPLED_COEFFS = ("b1", "b2", "k1", "k2", "alpha", "beta")


@dataclass(frozen=True)
class CoefficientSpec:
    """One identified coefficient: name, physical unit, network encoding.

    encoding "direct": the network emits the value itself (one slot).
    encoding "sci": the network emits (a, b) and the value is
    a * 10**(b + scale_decades) (two slots), used where magnitudes span
    several decades. `scale_decades` declares the coefficient's coarse
    order of magnitude (a units choice: the network learns the value in
    units of 10^scale_decades); at the pinned learning rate the exponent
    output drifts only a few 1e-4 per step, so without the offset a
    coefficient of order 1e8 cannot be reached within a practical epoch
    budget.
    """

    name: str
    unit: str = ""
    encoding: str = "direct"
    scale_decades: int = 0

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.encoding == "direct" and self.scale_decades != 0:
            raise ValueError("scale_decades applies to sci encoding only")


@dataclass(frozen=True)
class GenericTerm:
    """One force term: sign * coeff * prod(q_i^p) * prod(qd_j^r) [* rel factor].

    The optional rel factor is s*|s|^e with s = q_i - q_j and e a named
    coefficient (power-law coupling). `row` is the equation the term
    belongs to; the term is added on the force side, i.e. it enters the
    acceleration as -sign*coeff*(...)/m_row.
    """

    row: int
    coefficient: str
    sign: float = 1.0
    q_powers: tuple = ()
    qd_powers: tuple = ()
    rel_factor: tuple | None = None  # (i, j, exponent_coefficient_name)


@dataclass(frozen=True)
class ParameterSet:
    """Named physical coefficient values, ordered as the model declares."""

    names: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if len(self.names) != vals.size:
            raise ValueError("names and values length mismatch")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite parameter values")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    @classmethod
    def from_dict(cls, names, mapping) -> "ParameterSet":
        return cls(tuple(names), np.array([mapping[n] for n in names], dtype=float))


@dataclass(frozen=True)
class ModelSpec:
    """Assumed equation of motion plus the coefficient layout the
    parameter-generator emits (ordering is fixed and serialized with runs)."""

    kind: str
    masses_kg: tuple
    coefficients: tuple  # of CoefficientSpec
    terms: tuple = ()  # of GenericTerm, kind == "generic" only

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        masses = tuple(float(m) for m in self.masses_kg)
        object.__setattr__(self, "masses_kg", masses)
        if any(m <= 0.0 for m in masses):
            raise ValueError("masses must be strictly positive")
        names = [c.name for c in self.coefficients]
        if len(set(names)) != len(names):
            raise ValueError("duplicate coefficient names")
        if self.kind == "duffing":
            if len(masses) != 1 or tuple(names) != DUFFING_COEFFS:
                raise ValueError("duffing model needs 1 mass and coefficients b, b_nl, k, k_nl")
        elif self.kind == "coupled_power_law":
            if len(masses) != 2 or tuple(names) != COUPLED_COEFFS:
                raise ValueError(
                    "coupled_power_law model needs 2 masses and coefficients "
                    "b1, b2, k1, k2, alpha, beta"
                )
        else:
            if not self.terms:
                raise ValueError("generic model needs at least one term")
            for t in self.terms:
                if not 0 <= t.row < len(masses):
                    raise ValueError("term row out of range")
                if t.coefficient not in names:
                    raise ValueError(f"term references unknown coefficient {t.coefficient!r}")
                if len(t.q_powers) not in (0, len(masses)) or len(t.qd_powers) not in (0, len(masses)):
                    raise ValueError("term powers must cover every DOF (or be empty)")
                if t.rel_factor is not None:
                    i, j, exp_name = t.rel_factor
                    if not (0 <= i < len(masses) and 0 <= j < len(masses)):
                        raise ValueError("rel factor indices out of range")
                    if exp_name not in names:
                        raise ValueError(f"rel factor exponent {exp_name!r} not a coefficient")

    @property
    def dof(self) -> int:
        return len(self.masses_kg)

    @property
    def coefficient_names(self) -> tuple:
        return tuple(c.name for c in self.coefficients)

    @property
    def raw_dim(self) -> int:
        """Width of the parameter-generator output implied by the encodings."""
        return sum(2 if c.encoding == "sci" else 1 for c in self.coefficients)

    def parameter_set(self, mapping) -> ParameterSet:
        return ParameterSet.from_dict(self.coefficient_names, mapping)

    def generic_terms(self) -> tuple:
        """The model expressed as explicit force terms (identical dynamics)."""
        if self.kind == "generic":
            return self.terms
        if self.kind == "duffing":
            return (
                GenericTerm(0, "b", 1.0, qd_powers=(1,)),
                GenericTerm(0, "b_nl", 1.0, q_powers=(2,), qd_powers=(1,)),
                GenericTerm(0, "k", 1.0, q_powers=(1,)),
                GenericTerm(0, "k_nl", 1.0, q_powers=(3,)),
            )
        # coupled pair: the second mass carries the external force side
        return (
            GenericTerm(0, "b1", 1.0, qd_powers=(1, 0)),
            GenericTerm(0, "b2", 1.0, qd_powers=(1, 0)),
            GenericTerm(0, "b2", -1.0, qd_powers=(0, 1)),
            GenericTerm(0, "k1", 1.0, q_powers=(1, 0)),
            GenericTerm(0, "k2", 1.0, q_powers=(1, 0)),
            GenericTerm(0, "k2", -1.0, q_powers=(0, 1)),
            GenericTerm(0, "alpha", 1.0, rel_factor=(0, 1, "beta")),
            GenericTerm(1, "b2", -1.0, qd_powers=(1, 0)),
            GenericTerm(1, "b2", 1.0, qd_powers=(0, 1)),
            GenericTerm(1, "k2", -1.0, q_powers=(1, 0)),
            GenericTerm(1, "k2", 1.0, q_powers=(0, 1)),
            GenericTerm(1, "alpha", -1.0, rel_factor=(0, 1, "beta")),
        )


def duffing_model(mass_kg: float, encodings=None, scale_decades=None) -> ModelSpec:
    """Single-DOF oscillator with cubic stiffness and x^2*xd damping."""
    units = {"b": "N*s/m", "b_nl": "N*s/m^3", "k": "N/m", "k_nl": "N/m^3"}
    encodings = encodings or {}
    scale_decades = scale_decades or {}
    coeffs = tuple(
        CoefficientSpec(n, units[n], encodings.get(n, "direct"), scale_decades.get(n, 0))
        for n in DUFFING_COEFFS
    )
    return ModelSpec("duffing", (mass_kg,), coeffs)


def coupled_power_law_model(mass_1_kg: float, mass_2_kg: float, encodings=None,
                            scale_decades=None) -> ModelSpec:
    """Grounded oscillator coupled to a second mass through linear and
    power-law  alpha*(x-y)*|x-y|^beta  elements; force acts on the second mass."""
    units = {
        "b1": "N*s/m",
        "b2": "N*s/m",
        "k1": "N/m",
        "k2": "N/m",
        "alpha": "N/m^(beta+1)",
        "beta": "",
    }
    encodings = encodings or {}
    scale_decades = scale_decades or {}
    coeffs = tuple(
        CoefficientSpec(n, units[n], encodings.get(n, "direct"), scale_decades.get(n, 0))
        for n in COUPLED_COEFFS
    )
    return ModelSpec("coupled_power_law", (mass_1_kg, mass_2_kg), coeffs)


def default_encoding(expected_magnitude: float) -> str:
    """Library default: sci notation once the expected magnitude exceeds 1e3."""
    return "sci" if abs(expected_magnitude) > 1e3 else "direct"


# ---------------------------------------------------------------------------
# raw network outputs <-> physical values


def decode_batch(raw: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Decode raw generator outputs (batch x raw_dim) into coefficient
    values (batch x n_coefficients). Direct slots pass through; sci slots
    decode a*10^b with the exponent guarded against overflow."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != model.raw_dim:
        raise ValueError(f"expected raw width {model.raw_dim}, got {raw.shape}")
    values = np.empty((raw.shape[0], len(model.coefficients)))
    slot = 0
    for ci, coef in enumerate(model.coefficients):
        if coef.encoding == "direct":
            values[:, ci] = raw[:, slot]
            slot += 1
        else:
            a = raw[:, slot]
            b = raw[:, slot + 1] + coef.scale_decades
            if np.any(np.abs(b) > MAX_DECADE_EXPONENT):
                raise ValueError(
                    f"decade exponent out of range for {coef.name!r}: "
                    f"|b| max {np.max(np.abs(b)):.3g}"
                )
            values[:, ci] = a * np.power(10.0, b)
            slot += 2
    return values


def decode_params(raw_outputs: np.ndarray, model: ModelSpec) -> ParameterSet:
    """Decode one raw output vector into a named ParameterSet."""
    raw = np.asarray(raw_outputs, dtype=float).reshape(1, -1)
    values = decode_batch(raw, model)[0]
    return ParameterSet(model.coefficient_names, values)


def decode_batch_backward(raw: np.ndarray, dvalues: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Chain-rule a gradient w.r.t. decoded values back to the raw outputs."""
    raw = np.asarray(raw, dtype=float)
    dvalues = np.asarray(dvalues, dtype=float)
    draw = np.zeros_like(raw)
    ln10 = np.log(10.0)
    slot = 0
    for ci, coef in enumerate(model.coefficients):
        g = dvalues[:, ci]
        if coef.encoding == "direct":
            draw[:, slot] = g
            slot += 1
        else:
            a = raw[:, slot]
            pow10 = np.power(10.0, raw[:, slot + 1] + coef.scale_decades)
            draw[:, slot] = g * pow10
            draw[:, slot + 1] = g * a * pow10 * ln10
            slot += 2
    return draw


def encode_reference(values, model: ModelSpec) -> np.ndarray:
    """Raw vector that decodes to the given values (mantissa in [1, 10);
    handy for constructing generators pinned at known coefficients)."""
    params = values if isinstance(values, ParameterSet) else model.parameter_set(values)
    raw = []
    for coef, v in zip(model.coefficients, params.values):
        if coef.encoding == "direct":
            raw.append(v)
        else:
            if v == 0.0:
                raw.extend([0.0, -float(coef.scale_decades)])
            else:
                b = np.floor(np.log10(abs(v)))
                raw.extend([v / 10.0**b, b - coef.scale_decades])
    return np.array(raw, dtype=float)


# ---------------------------------------------------------------------------
# acceleration evaluation


def _as_batch(arr, dof, what):
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if dof > 1 or a.size > 1 else a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[1] != dof:
        raise ValueError(f"{what} must have {dof} column(s), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite values in {what}")
    return a


def _values_batch(values, n, ncoef):
    """Coefficient rows as (n x ncoef); a single row broadcasts over states."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v.reshape(1, -1)
    if v.shape[0] == 1 and n > 1:
        v = np.broadcast_to(v, (n, v.shape[1]))
    if v.shape != (n, ncoef):
        raise ValueError("coefficient batch shape mismatch")
    return v


def _rel_term(s, alpha, beta):
    """alpha * s * |s|^beta with the s == 0 case pinned to 0 (any beta)."""
    mag = np.abs(s)
    safe = np.where(mag > 0.0, mag, 1.0)
    return np.where(mag > 0.0, alpha * s * safe**beta, 0.0)


def eval_accel_batch(model: ModelSpec, values: np.ndarray, q: np.ndarray,
                     qdot: np.ndarray, force: np.ndarray | None = None) -> np.ndarray:
    """Accelerations for a batch of (coefficient set, state) rows.

    values: (batch x n_coefficients), q/qdot/force: (batch x dof).
    Row i is evaluated with coefficient row i.
    """
    dof = model.dof
    q = _as_batch(q, dof, "q")
    qd = _as_batch(qdot, dof, "qdot")
    n = q.shape[0]
    values = _values_batch(values, n, len(model.coefficients))
    f = np.zeros((n, dof)) if force is None else _as_batch(force, dof, "force")
    m = np.asarray(model.masses_kg)

    if model.kind == "duffing":
        b, b_nl, k, k_nl = (values[:, i] for i in range(4))
        x = q[:, 0]
        xd = qd[:, 0]
        internal = b * xd + b_nl * x * x * xd + k * x + k_nl * x**3
        return ((f[:, 0] - internal) / m[0]).reshape(n, 1)

    if model.kind == "coupled_power_law":
        b1, b2, k1, k2, alpha, beta = (values[:, i] for i in range(6))
        x, y = q[:, 0], q[:, 1]
        xd, yd = qd[:, 0], qd[:, 1]
        s = x - y
        sd = xd - yd
        coupling = b2 * sd + k2 * s + _rel_term(s, alpha, beta)
        acc = np.empty((n, 2))
        acc[:, 0] = (f[:, 0] - (b1 * xd + k1 * x + coupling)) / m[0]
        acc[:, 1] = (f[:, 1] + coupling) / m[1]
        return acc

    # generic term list
    name_to_col = {nm: i for i, nm in enumerate(model.coefficient_names)}
    total = f.copy()
    for term in model.terms:
        contrib = np.full(n, term.sign) * values[:, name_to_col[term.coefficient]]
        for i, p in enumerate(term.q_powers):
            if p:
                contrib = contrib * q[:, i] ** p
        for i, p in enumerate(term.qd_powers):
            if p:
                contrib = contrib * qd[:, i] ** p
        if term.rel_factor is not None:
            i, j, exp_name = term.rel_factor
            s = q[:, i] - q[:, j]
            contrib = contrib * _rel_term(s, 1.0, values[:, name_to_col[exp_name]])
        total[:, term.row] -= contrib
    return total / m


def eval_accel(model: ModelSpec, params, q, qdot, external_force=None, t: float = 0.0):
    """Acceleration vector for a single state (the EOM solved for qdd)."""
    values = params.values if isinstance(params, ParameterSet) else np.asarray(params, float)
    q1 = np.asarray(q, dtype=float).reshape(1, -1)
    qd1 = np.asarray(qdot, dtype=float).reshape(1, -1)
    f1 = None if external_force is None else np.asarray(external_force, float).reshape(1, -1)
    return eval_accel_batch(model, values.reshape(1, -1), q1, qd1, f1)[0]


def accel_param_jacobian_batch(model: ModelSpec, values: np.ndarray, q: np.ndarray,
                               qdot: np.ndarray) -> np.ndarray:
    """d(qdd)/d(coefficients), shape (batch x dof x n_coefficients).

    The power-law exponent derivative is alpha*s*|s|^beta*log|s| with |s|
    floored at REL_DISP_FLOOR inside the log.
    """
    dof = model.dof
    q = _as_batch(q, dof, "q")
    qd = _as_batch(qdot, dof, "qdot")
    n = q.shape[0]
    ncoef = len(model.coefficients)
    values = _values_batch(values, n, ncoef)
    m = np.asarray(model.masses_kg)
    jac = np.zeros((n, dof, ncoef))

    if model.kind == "duffing":
        x, xd = q[:, 0], qd[:, 0]
        jac[:, 0, 0] = -xd / m[0]
        jac[:, 0, 1] = -x * x * xd / m[0]
        jac[:, 0, 2] = -x / m[0]
        jac[:, 0, 3] = -(x**3) / m[0]
        return jac

    if model.kind == "coupled_power_law":
        alpha, beta = values[:, 4], values[:, 5]
        x, y = q[:, 0], q[:, 1]
        xd, yd = qd[:, 0], qd[:, 1]
        s = x - y
        sd = xd - yd
        rel = _rel_term(s, 1.0, beta)  # s*|s|^beta
        log_s = np.log(np.maximum(np.abs(s), REL_DISP_FLOOR))
        drel_dbeta = alpha * rel * log_s
        jac[:, 0, 0] = -xd / m[0]
        jac[:, 0, 1] = -sd / m[0]
        jac[:, 0, 2] = -x / m[0]
        jac[:, 0, 3] = -s / m[0]
        jac[:, 0, 4] = -rel / m[0]
        jac[:, 0, 5] = -drel_dbeta / m[0]
        jac[:, 1, 1] = sd / m[1]
        jac[:, 1, 3] = s / m[1]
        jac[:, 1, 4] = rel / m[1]
        jac[:, 1, 5] = drel_dbeta / m[1]
        return jac

    name_to_col = {nm: i for i, nm in enumerate(model.coefficient_names)}
    for term in model.terms:
        ccol = name_to_col[term.coefficient]
        mono = np.full(n, term.sign)
        for i, p in enumerate(term.q_powers):
            if p:
                mono = mono * q[:, i] ** p
        for i, p in enumerate(term.qd_powers):
            if p:
                mono = mono * qd[:, i] ** p
        if term.rel_factor is None:
            jac[:, term.row, ccol] += -mono / m[term.row]
        else:
            i, j, exp_name = term.rel_factor
            ecol = name_to_col[exp_name]
            s = q[:, i] - q[:, j]
            rel = _rel_term(s, 1.0, values[:, ecol])
            log_s = np.log(np.maximum(np.abs(s), REL_DISP_FLOOR))
            jac[:, term.row, ccol] += -mono * rel / m[term.row]
            jac[:, term.row, ecol] += -mono * values[:, ccol] * rel * log_s / m[term.row]
    return jac


def accel_param_jacobian(model: ModelSpec, params, q, qdot) -> np.ndarray:
    """Single-state jacobian, shape (dof x n_coefficients)."""
    values = params.values if isinstance(params, ParameterSet) else np.asarray(params, float)
    q1 = np.asarray(q, dtype=float).reshape(1, -1)
    qd1 = np.asarray(qdot, dtype=float).reshape(1, -1)
    return accel_param_jacobian_batch(model, values.reshape(1, -1), q1, qd1)[0]


# ---------------------------------------------------------------------------
# (de)serialization of model specs


def model_to_dict(model: ModelSpec) -> dict:
    payload = {
        "kind": model.kind,
        "masses_kg": list(model.masses_kg),
        "coefficients": [
            {
                "name": c.name,
                "unit": c.unit,
                "encoding": c.encoding,
                "scale_decades": c.scale_decades,
            }
            for c in model.coefficients
        ],
    }
    if model.kind == "generic":
        payload["terms"] = [
            {
                "row": t.row,
                "coefficient": t.coefficient,
                "sign": t.sign,
                "q_powers": list(t.q_powers),
                "qd_powers": list(t.qd_powers),
                "rel_factor": list(t.rel_factor) if t.rel_factor else None,
            }
            for t in model.terms
        ]
    return payload


def model_from_dict(payload: dict) -> ModelSpec:
    coeffs = tuple(
        CoefficientSpec(
            c["name"],
            c.get("unit", ""),
            c.get("encoding", "direct"),
            int(c.get("scale_decades", 0)),
        )
        for c in payload["coefficients"]
    )
    terms = ()
    if payload.get("terms"):
        terms = tuple(
            GenericTerm(
                int(t["row"]),
                t["coefficient"],
                float(t.get("sign", 1.0)),
                tuple(t.get("q_powers", ())),
                tuple(t.get("qd_powers", ())),
                tuple(t["rel_factor"]) if t.get("rel_factor") else None,
            )
            for t in payload["terms"]
        )
    return ModelSpec(payload["kind"], tuple(payload["masses_kg"]), coeffs, terms)
