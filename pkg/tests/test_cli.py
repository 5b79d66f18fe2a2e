import json

import pytest

from qbound.cli import main
from qbound.config import RunConfig, load_config
from qbound.intensity import ConfigError


def write(tmp_path, data, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_config_round_trip():
    cfg = RunConfig.from_dict(
        {
            "model": {"preset": "case-iii", "load": 20},
            "dsequence": {"head": [1, 1.5], "tail_ratio": 2.0},
            "simulation": {"paths": 100, "seed": 3, "grid": [1, 2]},
            "outputs": {"directory": "x", "formats": ["csv"]},
        }
    )
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg and again.config_hash == cfg.config_hash


@pytest.mark.parametrize(
    "bad",
    [
        {"model": {"preset": "case-i"}, "extra": 1},
        {"model": {"preset": "case-i"}, "solver": {"tol": 1e-8, "method": "rk4"}},
        {"model": {"class": "I", "S": 1, "lambda": 1, "mu": 1, "colour": 2}},
        {"model": {"preset": "case-i"}, "truncation": {"N_initial": -3}},
        {"dsequence": "paper-S100"},
    ],
)
def test_unknown_or_invalid_fields_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_load_config_reports_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_bounds_preset_case(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["bounds", "--preset", "case-i", "--load", "50", "--dseq", "paper-S100", "--out", str(out)])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["bounds"]["periodic"]["F"] == pytest.approx(100.0)
    assert rep["meta"]["config_hash"]
    assert (out / "rates.csv").read_text().startswith("# qbound")


def test_bounds_flat_weights_inconclusive(tmp_path):
    cfg = write(
        tmp_path,
        {
            "model": {"class": "I", "S": 3, "lambda": 1.0, "mu": 1.0},
            "dsequence": {"head": [1.0], "tail_ratio": 1.0},
            "outputs": {"directory": str(tmp_path / "o")},
        },
    )
    assert main(["bounds", str(cfg)]) == 2


def test_malformed_config_writes_nothing(tmp_path):
    cfg = write(tmp_path, {"model": {"preset": "case-i"}, "oops": True})
    out = tmp_path / "never"
    assert main(["bounds", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()


def test_missing_dsequence_is_an_error(tmp_path):
    out = tmp_path / "never"
    assert main(["bounds", "--preset", "case-i", "--out", str(out)]) == 1
    assert not out.exists()


def test_limits_idle_model(tmp_path):
    cfg = write(
        tmp_path,
        {
            "model": {"class": "I", "S": 1, "lambda": 0.0, "mu": 1.0},
            "truncation": {"N_initial": 8},
            "outputs": {"directory": str(tmp_path / "o"), "resolution": 11},
        },
    )
    assert main(["limits", str(cfg)]) == 0
    rows = [ln for ln in (tmp_path / "o" / "p0_curve.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "t,p0"
    assert all(float(r.split(",")[1]) == 1.0 for r in rows[1:])


def test_same_config_gives_identical_csv(tmp_path):
    args = ["simulate", "--preset", "case-i", "--load", "10", "--paths", "300", "--seed", "4", "--N", "60"]
    assert main(args + ["--out", str(tmp_path / "a")]) in (0, 2)
    assert main(args + ["--out", str(tmp_path / "b")]) in (0, 2)
    assert (tmp_path / "a" / "empirical.csv").read_bytes() == (tmp_path / "b" / "empirical.csv").read_bytes()


def test_matrices_command(tmp_path):
    out = tmp_path / "m"
    assert main(["matrices", "--preset", "case-iv", "--N", "3", "--which", "A", "--out", str(out)]) == 0
    body = [ln for ln in (out / "A.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(body) == 4


def test_preset_and_config_conflict(tmp_path):
    cfg = write(tmp_path, {"model": {"preset": "case-i"}})
    assert main(["bounds", str(cfg), "--preset", "case-ii"]) == 1
