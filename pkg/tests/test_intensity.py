import math

import numpy as np
import pytest

from qbound.intensity import (
    ConfigError,
    Constant,
    DomainError,
    ModelSpec,
    PiecewiseConstant,
    Sinusoid,
    StateRule,
    eval_lambda,
    eval_mu,
    local_bound_L,
    outflow_weights,
    preset_case,
    time_function,
)


def test_batch_arrival_rate_at_peak():
    m = preset_case("case-ii", load=50)
    assert eval_lambda(m, 1, 0.25) == pytest.approx(1.0, abs=1e-12)


def test_batch_arrival_vanishes_beyond_S():
    m = preset_case("case-ii", load=50)
    assert eval_lambda(m, 101, 0.0) == 0.0


def test_constant_state_arrival():
    m = ModelSpec("I", 1, 1.0, 2.0)
    assert eval_lambda(m, 7, 3.5) == 1.0


def test_service_min_rule_saturates():
    m = preset_case("case-ii", load=10)
    assert eval_mu(m, 150, 0.0) == pytest.approx(400.0)


def test_batch_service_rule():
    m = preset_case("case-iii", load=10)
    assert eval_mu(m, 4, 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("case", ["case-i", "case-ii", "case-iii", "case-iv"])
def test_no_service_in_empty_system(case):
    assert eval_mu(preset_case(case), 0, 0.3) == 0.0


@pytest.mark.parametrize("k,t", [(-1, 0.0), (0, -0.5)])
def test_negative_inputs_rejected(k, t):
    m = preset_case("case-i")
    with pytest.raises(DomainError):
        eval_lambda(m, k, t)
    with pytest.raises(DomainError):
        eval_mu(m, k, t)


def test_local_bound_single_server():
    m = ModelSpec("I", 1, 1.0, 2.0)
    assert local_bound_L(m, 5) == pytest.approx(3.0)


def test_local_bound_preset_case():
    assert local_bound_L(preset_case("case-i", 50), 155) == pytest.approx(500.0)


def test_local_bound_batch_both_brute_force():
    m = ModelSpec("IV", 2, 1.0, 1.0)
    N = 3
    best = 0.0
    for n in range(N + 1):
        arrivals = sum(eval_lambda(m, k, 0.0) for k in range(1, 3))
        services = sum(eval_mu(m, k, 0.0) for k in range(1, min(n, 2) + 1))
        best = max(best, arrivals + services)
    assert local_bound_L(m, N) == pytest.approx(best)


def test_total_batch_intensity_normalisation():
    m = preset_case("case-iv", 20)
    t = 0.13
    total = sum(eval_lambda(m, k, t) for k in range(1, 101))
    expected = float(m.lambda_base(t)) * sum(1 / (100 * k) for k in range(1, 101))
    assert total == pytest.approx(expected, rel=1e-12)


def test_negative_sinusoid_rejected():
    with pytest.raises(ConfigError):
        time_function({"form": "sin", "offset": 1.0, "amplitude": 2.0})


def test_unknown_intensity_field_rejected():
    with pytest.raises(ConfigError):
        time_function({"form": "constant", "value": 1.0, "colour": "red"})


def test_periodicity_on_grid():
    f = time_function(
        {
            "form": "sum",
            "terms": [
                {"form": "cos", "offset": 3, "amplitude": 1},
                {"form": "piecewise", "breaks": [0, 0.4], "values": [1, 2]},
            ],
        }
    )
    assert f.period_one
    t = np.linspace(0, 3, 1000, endpoint=False) + 1e-4
    assert np.max(np.abs(f(t) - f(t + 1))) < 1e-12


def test_non_integer_frequency_is_not_periodic():
    assert not Sinusoid(2.0, 1.0, "sin", frequency=0.5).period_one


def test_piecewise_evaluation_and_breaks():
    f = PiecewiseConstant((0.0, 0.5), (1.0, 3.0))
    assert f(0.25) == 1.0 and f(0.75) == 3.0 and f(1.6) == 3.0
    assert 0.5 in f.breakpoints()
    with pytest.raises(ConfigError):
        PiecewiseConstant((0.1,), (1.0,))


def test_sup_inf_of_leaves():
    s = Sinusoid(50.0, 50.0, "sin")
    assert s.sup() == 100.0 and s.inf() == 0.0
    assert Constant(2.5).sup() == 2.5


def test_scalar_and_vector_evaluation():
    s = Sinusoid(3.0, 1.0, "cos")
    assert isinstance(s(0.0), float)
    assert np.allclose(s(np.array([0.0, 0.5])), [4.0, 2.0])


def test_model_round_trip_and_rules():
    m = ModelSpec("BD", 3, 2.0, {"form": "cos", "offset": 3, "amplitude": 1}, [0.5, 1.0], "min(n,S)")
    assert m.class_tag == "I"
    again = ModelSpec.from_dict(m.to_dict())
    assert again == m
    assert m.lambda_weights(4).tolist() == [0.5, 1.0, 1.0, 1.0, 1.0]


def test_rule_forbidden_for_batch_class():
    with pytest.raises(ConfigError):
        ModelSpec("IV", 2, 1.0, 1.0, StateRule("table", (1.0,)))


def test_invalid_server_count():
    with pytest.raises(ConfigError):
        ModelSpec("I", 0, 1.0, 1.0)


def test_outflow_weights_batch_service_cumulative():
    m = ModelSpec("III", 3, 1.0, 1.0)
    _, mu_out = outflow_weights(m, 5)
    assert np.allclose(mu_out, [0.0, 1.0, 1.5, 11 / 6, 11 / 6, 11 / 6])


def test_scaled_model():
    m = preset_case("case-i", 10).scaled(2.0)
    assert float(m.lambda_base(0.25)) == pytest.approx(40.0)
    assert math.isclose(m.mu_base.sup(), 8.0)
