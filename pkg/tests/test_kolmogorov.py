import numpy as np
import pytest

from qbound.dseq import geometric
from qbound.intensity import ConfigError, DomainError, ModelSpec, Sinusoid, preset_case
from qbound.kolmogorov import (
    SolverError,
    TruncationError,
    characteristics,
    convergence_experiment,
    limiting_regime,
    solve,
    unit_vector,
)
from qbound.bounds import UnsupportedModeError


def test_mm1_reaches_geometric_law():
    traj = solve(ModelSpec("I", 1, 1.0, 4.0), 100, None, (0.0, 10.0), 1e-10, [10.0])
    pi = 0.75 * 0.25 ** np.arange(101)
    assert np.abs(traj.final - pi).sum() < 1e-6


def test_zero_rates_freeze():
    p0 = np.array([0.2, 0.3, 0.5])
    traj = solve(ModelSpec("I", 1, 0.0, 0.0), 2, p0, (0.0, 3.0), 1e-10, [0.0, 1.5, 3.0])
    assert np.array_equal(traj.states, np.tile(p0, (3, 1)))


def test_characteristics_examples():
    assert characteristics(unit_vector(6, 0)) == (1.0, 0.0)
    assert characteristics(unit_vector(6, 5)) == (0.0, 5.0)
    assert characteristics(np.full(4, 0.25)) == (0.25, 1.5)


def test_bad_initial_data():
    m = preset_case("case-i")
    with pytest.raises(DomainError):
        solve(m, 5, np.ones(3) / 3)
    with pytest.raises(SolverError):
        solve(m, 2, np.array([0.5, 0.2, 0.2]))
    with pytest.raises(ConfigError):
        solve(m, 2, None, (0, 1), tol=0)


def test_solver_stats_name_L():
    traj = solve(preset_case("case-i", 50), 155, None, (0.0, 0.2), 1e-8)
    assert traj.solver_stats["L"] == pytest.approx(500.0)
    assert traj.solver_stats["max_step"] == pytest.approx(1e-3)


def test_tolerance_halving_is_consistent():
    m = preset_case("case-ii", 10)
    a = solve(m, 120, None, (0.0, 2.0), 1e-8, [2.0]).final
    b = solve(m, 120, None, (0.0, 2.0), 5e-9, [2.0]).final
    assert np.abs(a - b).max() < 1e-7


def test_approach_to_periodic_regime():
    m = preset_case("case-i", 10)
    traj = solve(m, 100, None, (0.0, 5.0), 1e-10, np.arange(6.0))
    gaps = [np.abs(traj.states[k + 1] - traj.states[k]).sum() for k in range(2, 5)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_limiting_regime_high_load_idle_probability():
    lc = limiting_regime(preset_case("case-i", 50), tol_truncation=1e-4, samples=101)
    assert lc.within_tolerance and lc.truncation_error_estimate < 1e-4
    assert np.mean(lc.p0_curve < 1e-3) > 0.6


def test_limiting_regime_needs_periodic_model():
    m = ModelSpec("I", 1, Sinusoid(2.0, 1.0, "sin", frequency=0.5), 3.0)
    with pytest.raises(UnsupportedModeError):
        limiting_regime(m)


def test_truncation_cap():
    with pytest.raises(TruncationError):
        limiting_regime(preset_case("case-i", 50), 1e-6, N_start=8, N_cap=32, samples=11)


def test_limits_of_idle_model():
    lc = limiting_regime(ModelSpec("I", 1, 0.0, 1.0), samples=11, N_start=4)
    assert np.allclose(lc.p0_curve, 1.0) and np.allclose(lc.mean_curve, 0.0)


def test_convergence_experiment_mm1():
    m = ModelSpec("I", 1, 1.0, 4.0)
    tab = convergence_experiment(m, geometric(2.0), 40, unit_vector(40, 5), unit_vector(40, 0), (0, 2))
    assert tab.passed, tab.failures
    assert "lower_beta" in tab.columns


def test_convergence_experiment_identical_start():
    m = preset_case("case-i", 10)
    tab = convergence_experiment(m, geometric(1.2), 30, unit_vector(30, 2), unit_vector(30, 2), (0, 1), n_samples=5)
    assert tab.passed
    assert np.all(tab.column("tv") == 0)
