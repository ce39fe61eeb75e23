import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siva import physics
from siva.physics import (
    CoefficientSpec,
    GenericTerm,
    ModelSpec,
    ParameterSet,
    accel_param_jacobian,
    accel_param_jacobian_batch,
    coupled_power_law_model,
    decode_batch,
    decode_batch_backward,
    decode_params,
    duffing_model,
    encode_reference,
    eval_accel,
    eval_accel_batch,
    model_from_dict,
    model_to_dict,
)
from conftest import central_difference, max_relative_error

DUFFING_TRUTH = {"b": 0.5, "b_nl": 4000.0, "k": 300.0, "k_nl": 3e8}
COUPLED_TRUTH = {"b1": 3.8405, "b2": 0.78563, "k1": 19273.0, "k2": 1947.6,
                 "alpha": 2.7641e7, "beta": 2.0012}


def sci_duffing():
    return duffing_model(0.05, encodings={n: "sci" for n in DUFFING_TRUTH})


class TestDecode:
    def test_sci_notation(self):
        model = duffing_model(1.0, encodings={"b": "sci"})
        raw = np.array([3.0, 8.0, 1.0, 1.0, 1.0])
        params = decode_params(raw, model)
        assert params["b"] == 3e8

    def test_direct_passthrough(self):
        model = duffing_model(1.0)
        params = decode_params(np.array([0.5, 1.0, 2.0, 3.0]), model)
        assert params["b"] == 0.5

    def test_sign_preserved(self):
        model = duffing_model(1.0, encodings={"b": "sci"})
        params = decode_params(np.array([-1.5, 2.0, 0.0, 0.0, 0.0]), model)
        assert params["b"] == -150.0

    def test_decade_offset(self):
        model = duffing_model(1.0, encodings={"b": "sci"}, scale_decades={"b": 8})
        params = decode_params(np.array([3.0, 0.0, 0.0, 0.0, 0.0]), model)
        assert params["b"] == 3e8

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            decode_params(np.ones(3), duffing_model(1.0))

    def test_exponent_overflow_guard(self):
        model = duffing_model(1.0, encodings={"b": "sci"})
        with pytest.raises(ValueError):
            decode_params(np.array([1.0, 400.0, 0.0, 0.0, 0.0]), model)

    @given(st.integers(-8, 8))
    @settings(max_examples=17, deadline=None)
    def test_exponent_monotonicity_exact(self, b):
        model = duffing_model(1.0, encodings={"b": "sci"})
        lo = decode_params(np.array([2.5, float(b), 0, 0, 0]), model)["b"]
        hi = decode_params(np.array([2.5, float(b + 1), 0, 0, 0]), model)["b"]
        assert hi == 10.0 * lo

    def test_encode_reference_roundtrip(self):
        model = sci_duffing()
        raw = encode_reference(DUFFING_TRUTH, model)
        params = decode_params(raw, model)
        for name, value in DUFFING_TRUTH.items():
            assert params[name] == pytest.approx(value, rel=1e-12)

    def test_backward_matches_finite_differences(self, rng):
        model = duffing_model(1.0, encodings={"b": "sci", "k_nl": "sci"},
                              scale_decades={"k_nl": 3})
        raw = rng.standard_normal((4, model.raw_dim))
        w = rng.standard_normal((4, 4))

        def scalar():
            return float(np.sum(w * decode_batch(raw, model)))

        analytic = decode_batch_backward(raw, w, model)
        numeric = central_difference(scalar, [raw])
        assert max_relative_error([analytic], numeric) < 1e-5


class TestEvalAccel:
    def test_duffing_truth_point(self):
        model = duffing_model(0.05)
        truth = model.parameter_set(DUFFING_TRUTH)
        acc = eval_accel(model, truth, [0.0], [5.0])
        assert acc[0] == pytest.approx(-50.0)

    def test_equilibrium(self):
        model = duffing_model(0.05)
        truth = model.parameter_set(DUFFING_TRUTH)
        assert eval_accel(model, truth, [0.0], [0.0])[0] == 0.0

    def test_coupled_coincident_states(self):
        model = coupled_power_law_model(1.37, 1.37)
        params = model.parameter_set(COUPLED_TRUTH)
        q = [0.01, 0.01]
        qd = [0.3, 0.3]
        acc = eval_accel(model, params, q, qd, external_force=[0.0, 2.0])
        b1, k1 = COUPLED_TRUTH["b1"], COUPLED_TRUTH["k1"]
        assert acc[0] == pytest.approx(-(b1 * 0.3 + k1 * 0.01) / 1.37)
        assert acc[1] == pytest.approx(2.0 / 1.37)

    def test_zero_relative_displacement_any_beta(self):
        model = coupled_power_law_model(1.0, 1.0)
        params = model.parameter_set({**COUPLED_TRUTH, "beta": -1.7})
        acc = eval_accel(model, params, [0.2, 0.2], [0.0, 0.0])
        assert np.all(np.isfinite(acc))

    def test_non_finite_state_rejected(self):
        model = duffing_model(1.0)
        with pytest.raises(ValueError):
            eval_accel(model, model.parameter_set(DUFFING_TRUTH), [np.nan], [0.0])

    def test_generic_matches_duffing(self, rng):
        closed = duffing_model(0.05)
        generic = ModelSpec("generic", (0.05,), closed.coefficients,
                            closed.generic_terms())
        values = rng.standard_normal((20, 4)) * np.array([1.0, 1e3, 1e2, 1e8])
        q = rng.standard_normal((20, 1)) * 0.01
        qd = rng.standard_normal((20, 1))
        a = eval_accel_batch(closed, values, q, qd)
        b = eval_accel_batch(generic, values, q, qd)
        assert np.allclose(a, b, rtol=1e-13, atol=1e-300)

    def test_generic_matches_coupled(self, rng):
        closed = coupled_power_law_model(1.37, 1.37)
        generic = ModelSpec("generic", (1.37, 1.37), closed.coefficients,
                            closed.generic_terms())
        values = np.column_stack([
            rng.standard_normal(20) * 4,
            rng.standard_normal(20),
            rng.standard_normal(20) * 2e4,
            rng.standard_normal(20) * 2e3,
            rng.standard_normal(20) * 3e7,
            rng.uniform(0.5, 3.0, 20),
        ])
        q = rng.standard_normal((20, 2)) * 0.01
        qd = rng.standard_normal((20, 2)) * 0.3
        f = rng.standard_normal((20, 2))
        a = eval_accel_batch(closed, values, q, qd, f)
        b = eval_accel_batch(generic, values, q, qd, f)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


class TestJacobian:
    def test_duffing_damping_column(self):
        model = duffing_model(0.05)
        jac = accel_param_jacobian(model, model.parameter_set(DUFFING_TRUTH),
                                   [0.0], [5.0])
        assert jac[0, 0] == pytest.approx(-100.0)

    def test_duffing_cubic_column_at_origin(self):
        model = duffing_model(0.05)
        jac = accel_param_jacobian(model, model.parameter_set(DUFFING_TRUTH),
                                   [0.0], [5.0])
        assert jac[0, 3] == 0.0

    def test_coupled_beta_column_at_unit_gap(self):
        model = coupled_power_law_model(1.0, 1.0)
        params = model.parameter_set(COUPLED_TRUTH)
        jac = accel_param_jacobian(model, params, [1.5, 0.5], [0.0, 0.0])
        beta_col = list(model.coefficient_names).index("beta")
        assert jac[0, beta_col] == 0.0
        assert jac[1, beta_col] == 0.0

    @pytest.mark.parametrize("kind", ["duffing", "coupled", "generic"])
    def test_matches_finite_differences(self, kind, rng):
        if kind == "duffing":
            model = duffing_model(0.05)
            values = np.array([0.4, 900.0, 250.0, 1.2e6])
            q = rng.standard_normal((1, 1)) * 0.01
            qd = rng.standard_normal((1, 1))
        else:
            closed = coupled_power_law_model(1.37, 1.37)
            if kind == "generic":
                model = ModelSpec("generic", (1.37, 1.37), closed.coefficients,
                                  closed.generic_terms())
            else:
                model = closed
            values = np.array([3.8, 0.78, 1.9e4, 1.9e3, 2.7e6, 1.8])
            q = rng.standard_normal((1, 2)) * 0.01
            qd = rng.standard_normal((1, 2)) * 0.3
        jac = accel_param_jacobian_batch(model, values.reshape(1, -1), q, qd)[0]
        for d in range(model.dof):
            def acc_d():
                return eval_accel_batch(model, values.reshape(1, -1), q, qd)[0, d]
            numeric = central_difference(acc_d, [values])[0]
            assert max_relative_error([jac[d]], [numeric]) < 1e-6


def test_chain_rule_through_decode_and_accel(rng):
    """Gradient of an acceleration MSE w.r.t. raw generator outputs."""
    model = duffing_model(0.05, encodings={"b_nl": "sci", "k_nl": "sci"},
                          scale_decades={"b_nl": 3, "k_nl": 8})
    raw = rng.standard_normal((5, model.raw_dim)) * 0.3
    q = rng.standard_normal((5, 1)) * 0.01
    qd = rng.standard_normal((5, 1))
    target = rng.standard_normal((5, 1)) * 100

    def loss():
        values = decode_batch(raw, model)
        acc = eval_accel_batch(model, values, q, qd)
        return float(np.mean((acc - target) ** 2))

    values = decode_batch(raw, model)
    acc = eval_accel_batch(model, values, q, qd)
    dacc = 2.0 * (acc - target) / acc.size
    jac = accel_param_jacobian_batch(model, values, q, qd)
    dvalues = np.einsum("bd,bdc->bc", dacc, jac)
    analytic = decode_batch_backward(raw, dvalues, model)
    numeric = central_difference(loss, [raw])
    assert max_relative_error([analytic], numeric) < 1e-5


class TestModelSpec:
    def test_masses_must_be_positive(self):
        with pytest.raises(ValueError):
            duffing_model(0.0)

    def test_duffing_requires_canonical_names(self):
        with pytest.raises(ValueError):
            ModelSpec("duffing", (1.0,), (CoefficientSpec("k"),))

    def test_generic_validates_term_references(self):
        coeffs = (CoefficientSpec("c0"),)
        with pytest.raises(ValueError):
            ModelSpec("generic", (1.0,), coeffs,
                      (GenericTerm(0, "nope", q_powers=(1,)),))
        with pytest.raises(ValueError):
            ModelSpec("generic", (1.0,), coeffs,
                      (GenericTerm(3, "c0", q_powers=(1,)),))

    def test_raw_dim(self):
        model = duffing_model(1.0, encodings={"b": "sci", "k": "sci"})
        assert model.raw_dim == 6

    def test_serialization_roundtrip(self):
        model = coupled_power_law_model(
            1.37, 1.37, encodings={"alpha": "sci"}, scale_decades={"alpha": 7}
        )
        clone = model_from_dict(model_to_dict(model))
        assert clone == model

    def test_generic_serialization_roundtrip(self):
        base = duffing_model(0.05)
        model = ModelSpec("generic", (0.05,), base.coefficients, base.generic_terms())
        clone = model_from_dict(model_to_dict(model))
        assert clone == model

    def test_parameter_set_requires_finite(self):
        with pytest.raises(ValueError):
            ParameterSet(("a",), np.array([np.inf]))

    def test_default_encoding_rule(self):
        assert physics.default_encoding(3e8) == "sci"
        assert physics.default_encoding(300.0) == "direct"
