"""Randomised invariants over models, weight sequences and vectors."""

import json

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from qbound.bounds import ClosedFormRates, TruncatedRates, periodic_constants
from qbound.config import RunConfig
from qbound.dseq import DSequence, compute_W, norm_1D, norm_1E
from qbound.generator import build_A, build_reduced, transform_Bstar
from qbound.intensity import ModelSpec, Sinusoid, time_function

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def dsequences(draw):
    steps = draw(st.lists(st.floats(1.0, 1.6), min_size=0, max_size=6))
    head = [1.0]
    for s in steps:
        head.append(head[-1] * s)
    return DSequence(tuple(head), draw(st.floats(1.05, 2.0)))


@st.composite
def models(draw):
    cls = draw(st.sampled_from(["I", "II", "III", "IV"]))
    S = draw(st.integers(1, 4))
    lam = Sinusoid(draw(st.floats(0.5, 3.0)), 0.0, "sin")
    lam = Sinusoid(lam.offset, draw(st.floats(0.0, lam.offset)), "sin")
    mu = Sinusoid(draw(st.floats(0.5, 3.0)), 0.0, "cos")
    mu = Sinusoid(mu.offset, draw(st.floats(0.0, mu.offset)), "cos")
    return ModelSpec(cls, S, lam, mu)


@SETTINGS
@given(models(), st.integers(2, 30), st.floats(0, 3))
def test_columns_of_A_sum_to_zero(model, N, t):
    A = build_A(model, N, t)
    assert np.allclose(A.sum(axis=0), 0.0, atol=1e-12)
    B, f = build_reduced(A)
    assert np.allclose(B, A[1:, 1:] - A[1:, [0]])


@SETTINGS
@given(dsequences(), st.lists(st.floats(-1, 1), min_size=1, max_size=25))
def test_norm_sandwich(d, z):
    z = np.asarray(z)
    W = compute_W(d).W
    n1D = norm_1D(z, d)
    assert np.abs(z).sum() <= 2 * n1D + 1e-12
    assert norm_1E(z) <= 2 / W * n1D + 1e-9


@SETTINGS
@given(dsequences(), st.lists(st.floats(0, 1), min_size=1, max_size=25))
def test_nonnegative_vectors_and_W_star(d, z):
    z = np.asarray(z)
    assert norm_1D(z, d) >= compute_W(d).W_star * norm_1E(z) - 1e-12


@SETTINGS
@given(models(), dsequences(), st.floats(0, 1), st.floats(0.2, 5.0))
def test_scale_covariance(model, d, t, c):
    a = ClosedFormRates(model, d)
    b = ClosedFormRates(model.scaled(c), d)
    for name in ("alpha", "beta", "chi"):
        x, y = getattr(a, name)(t), getattr(b, name)(t)
        assert np.isclose(y, c * x, rtol=1e-9, atol=1e-9)
    pa = TruncatedRates(model, d, 20, "lump").positivity()
    pb = TruncatedRates(model.scaled(c), d, 20, "lump").positivity()
    assert pa.ok == pb.ok


@settings(max_examples=10, deadline=None)
@given(models(), dsequences(), st.floats(0.5, 3.0))
def test_periodic_constants_scale(model, d, c):
    p = periodic_constants(model, d)
    q = periodic_constants(model.scaled(c), d)
    assert np.isclose(q.a, c * p.a, rtol=1e-7, atol=1e-8)
    assert np.isclose(q.F, c * p.F, rtol=1e-12)


@SETTINGS
@given(models(), dsequences(), st.floats(0, 1))
def test_truncated_log_norms(model, d, t):
    N = 12 + model.S
    Bs = transform_Bstar(build_reduced(build_A(model, N, t, "lump"))[0], d)
    tr = TruncatedRates(model, d, N, "lump")
    col = -Bs.sum(axis=0)
    assert np.isclose(tr.alpha(t), -np.max(np.diag(Bs) + np.abs(Bs).sum(axis=0) - np.abs(np.diag(Bs))))
    assert tr.beta(t) >= tr.alpha(t) - 1e-9 and np.isclose(tr.beta(t), np.max(col))


@SETTINGS
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.floats(0, 2))
def test_periodicity_of_parsed_intensities(a, b, t):
    f = time_function({"form": "sum", "terms": [{"form": "sin", "offset": a + b, "amplitude": b}, a]})
    assert abs(float(f(t + 1.0)) - float(f(t))) < 1e-12
    assert float(f(t)) >= 0


@SETTINGS
@given(models(), st.integers(1, 500), st.floats(1e-6, 1e-2), st.integers(0, 2**31))
def test_config_round_trip_property(model, N, tol, seed):
    data = {
        "model": model.to_dict(),
        "truncation": {"N_initial": N, "N_cap": 4 * N, "tolerance": tol},
        "simulation": {"seed": seed},
    }
    cfg = RunConfig.from_dict(data)
    assert RunConfig.from_dict(json.loads(cfg.to_json())) == cfg
