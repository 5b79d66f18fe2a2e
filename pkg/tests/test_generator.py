import numpy as np
import pytest

from qbound.dseq import DSequence, geometric
from qbound.generator import (
    InvalidGeneratorError,
    build_A,
    build_D,
    build_reduced,
    check_positivity,
    dump_csv,
    rate_matrices,
    transform_Bstar,
    transition_structure,
)
from qbound.intensity import DomainError, ModelSpec, StateRule, preset_case


def bd_two_state():
    return ModelSpec("I", 1, 1.0, 2.0, StateRule("one"), StateRule("table", (0.0, 1.0)))


def test_birth_death_layout():
    A = build_A(bd_two_state(), 2, 0.7)
    assert A.tolist() == [[-1, 2, 0], [1, -3, 2], [0, 1, -2]]


def test_batch_service_first_row():
    m = preset_case("case-iii", 10)
    A = build_A(m, 6, 0.0)
    for j in range(1, 7):
        assert A[0, j] == pytest.approx(4.0 / j)


def test_batch_both_small():
    m = ModelSpec("IV", 2, 2.0, 2.0)
    A = build_A(m, 3, 0.0)
    assert A[1, 0] == 1.0 and A[2, 0] == 0.5
    assert A[0, 1] == 2.0 and A[0, 2] == 1.0 and A[1, 2] == 2.0
    assert np.allclose(A.sum(axis=0), 0.0, atol=1e-12)


@pytest.mark.parametrize("case", ["case-i", "case-ii", "case-iii", "case-iv"])
@pytest.mark.parametrize("overflow", ["drop", "lump"])
def test_generator_columns_and_signs(case, overflow):
    A = build_A(preset_case(case, 20), 130, 0.37, overflow)
    assert np.allclose(A.sum(axis=0), 0.0, atol=1e-12)
    off = A - np.diag(np.diag(A))
    assert off.min() >= 0


def test_preconditions():
    with pytest.raises(DomainError):
        build_A(bd_two_state(), 0, 0.0)
    with pytest.raises(DomainError):
        build_A(bd_two_state(), 2, -1.0)


def test_reduced_system():
    B, f = build_reduced(build_A(bd_two_state(), 2, 0.0))
    assert B.tolist() == [[-4, 1], [1, -2]]
    assert f.tolist() == [1, 0]


def test_reduced_rejects_bad_generator():
    with pytest.raises(InvalidGeneratorError):
        build_reduced(np.array([[-1.0, 0.0], [0.5, 0.0]]))


def test_D_and_inverse():
    D, Dinv = build_D(DSequence((1.0, 2.0), 2.0), 2)
    assert D.tolist() == [[1, 1], [0, 2]]
    assert Dinv.tolist() == [[1, -0.5], [0, 0.5]]
    assert np.allclose(D @ Dinv, np.eye(2))


def test_D_all_ones_has_unit_superdiagonal():
    _, Dinv = build_D(DSequence((1.0, 1.0, 1.0), 1.0), 3)
    assert Dinv.tolist() == [[1, -1, 0], [0, 1, -1], [0, 0, 1]]


def test_Bstar_hand_example():
    B = np.array([[-4.0, 1.0], [1.0, -2.0]])
    Bs = transform_Bstar(B, DSequence((1.0, 2.0), 2.0))
    assert Bs.tolist() == [[-3, 1], [2, -3]]


def test_Bstar_matches_dense_product():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(9, 9))
    d = DSequence((1.0, 1.0, 1.7, 2.0), 1.4)
    D, Dinv = build_D(d, 9)
    assert np.allclose(transform_Bstar(B, d), D @ B @ Dinv, atol=1e-12)


def test_Bstar_all_ones_weights_matches_product():
    # the tail-sum conjugation does not reduce to the identity map
    B = np.array([[-4.0, 1.0], [1.0, -2.0]])
    d = DSequence((1.0,), 1.0)
    D, Dinv = build_D(d, 2)
    assert np.allclose(transform_Bstar(B, d), D @ B @ Dinv)
    assert transform_Bstar(B, d).tolist() == [[-3, 2], [1, -3]]


def test_positivity_examples():
    assert check_positivity(np.array([[-3.0, 1.0], [2.0, -3.0]]))
    assert check_positivity(np.zeros((3, 3)))
    v = check_positivity(np.array([[-1.0, 0.5, 0.0], [0.2, -1.0, -0.3], [0.0, 0.1, -1.0]]))
    assert not v and v.index == (2, 3) and v.min_entry == pytest.approx(-0.3)


def test_birth_death_always_positive_even_with_fast_growth():
    m = ModelSpec("I", 1, 5.0, 1.0)
    mats = rate_matrices(m, geometric(10.0), 12, 0.0)
    assert check_positivity(mats.Bstar)


def test_linear_split_matches_direct_assembly():
    m = preset_case("case-iv", 10)
    s = transition_structure(m, 40)
    t = 0.61
    lam, mu = s.rates(t)
    assert np.allclose(s.A(t), lam * s.A_lam.toarray() + mu * s.A_mu.toarray())
    p = np.random.default_rng(0).random(41)
    assert np.allclose(s.matvec(t, p), s.A(t) @ p)


def test_lump_sends_overflow_to_top_state():
    m = ModelSpec("II", 3, 3.0, 1.0)
    A = build_A(m, 4, 0.0, "lump")
    # from state 3 batches of size 1..3 all end in state 4
    assert A[4, 3] == pytest.approx(1 + 1 / 2 + 1 / 3)


def test_dump_csv(tmp_path):
    mats = rate_matrices(bd_two_state(), DSequence((1.0, 2.0), 2.0), 2, 0.0)
    path = tmp_path / "b.csv"
    dump_csv(mats, bd_two_state(), path, "Bstar")
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert lines == ["-3,1", "2,-3"]
