import numpy as np
import pytest

from qbound.dseq import DSequence, compute_W, geometric, norm_1D, norm_1E, s100_sequence, tail_sums
from qbound.intensity import ConfigError, DomainError


def test_preset_sequence_values():
    d = s100_sequence()
    assert d.value(50) == 1.0
    assert d.value(101) == pytest.approx(1.05)
    assert d.value(107) == pytest.approx(25.417392, rel=1e-12)


def test_index_below_one():
    with pytest.raises(DomainError):
        s100_sequence().value(0)


def test_validation():
    with pytest.raises(ConfigError):
        DSequence((2.0, 3.0), 2.0)
    with pytest.raises(ConfigError):
        DSequence((1.0, 0.5), 2.0)
    with pytest.raises(ConfigError):
        DSequence((1.0,), 0.9)


def test_W_for_preset_sequence():
    nc = compute_W(s100_sequence())
    assert nc.W == pytest.approx(0.01, rel=1e-12)
    assert nc.attained_index_W == 100
    assert nc.W_star == 1.0


def test_W_for_doubling_sequence():
    nc = compute_W(geometric(2.0))
    assert nc.W == 1.0 and nc.attained_index_W == 1


def test_W_rejects_flat_tail():
    with pytest.raises(ConfigError):
        compute_W(DSequence((1.0, 1.0), 1.0))


def test_W_stable_when_scan_extended():
    d = DSequence((1.0, 1.0, 1.5, 2.0), 1.1)
    nc = compute_W(d)
    J = nc.scanned_to * 4
    i = np.arange(1, J + 1)
    assert np.min(d.values(J) / i) == pytest.approx(nc.W, rel=1e-12)


def test_norm_examples():
    d12 = geometric(2.0)
    assert norm_1D(np.array([1.0, 0.0, 0.0]), d12) == 1.0
    assert norm_1D(np.array([0.0, 1.0, 0.0]), d12) == 3.0
    assert norm_1D(np.array([0.5, -0.5, 0.0]), d12) == pytest.approx(1.0)
    assert norm_1E(np.eye(6)[0]) == 1
    assert norm_1E(np.eye(6)[4]) == 5
    assert norm_1E(np.array([0.1, 0.2, 0.3])) == pytest.approx(1.4)


def test_tail_sums_rows():
    z = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 1.0]])
    assert tail_sums(z).tolist() == [[6.0, 5.0, 3.0], [1.0, 1.0, 1.0]]


def test_parse_and_preset_round_trip():
    assert DSequence.parse("paper-S100") == s100_sequence()
    assert s100_sequence().to_spec() == "paper-S100"
    d = DSequence((1.0, 2.0), 3.0)
    assert DSequence.parse(d.to_spec()) == d
    with pytest.raises(ConfigError):
        DSequence.parse({"head": [1.0], "extra": 1})
