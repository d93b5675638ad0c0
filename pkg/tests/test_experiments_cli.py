import json

import pytest

from ergoreg import cli
from ergoreg import experiments as ex
from ergoreg.errors import ConfigError

HEADER = "param1,param2,norm_inf,norm_0,norm_1,bound_0,bound_1,lower_bound_1,mc_mean,mc_stderr\n"


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_classify_sequence():
    assert ex.classify_sequence(ex.sequence_pairs({"rule": "mu=nu^2"})) == "mu/nu->0"
    assert ex.classify_sequence(ex.sequence_pairs({"rule": "mu=nu"})) == "ratio-constant"
    assert ex.classify_sequence(ex.sequence_pairs({"rule": "nu=mu^2"})) == "nu/mu->0"
    assert ex.classify_sequence([(0.1, 0.1)]) == "indeterminate"
    with pytest.raises(ConfigError) as exc:
        ex.sequence_pairs({"rule": "custom"})
    assert exc.value.field == "sequence.pairs"


def test_config_errors_name_the_field(tmp_path):
    with pytest.raises(ConfigError) as exc:
        ex.ExperimentConfig.from_dict({"experiment": "sweep_T"})
    assert exc.value.field == "schema"
    with pytest.raises(ConfigError) as exc:
        ex.ExperimentConfig.from_dict({"schema": 1, "experiment": "sweep_T", "T": [-1.0]})
    assert exc.value.field.startswith("T")
    with pytest.raises(ConfigError) as exc:
        ex.ExperimentConfig.from_dict({"schema": 1, "experiment": "sweep_T", "dimension": 2,
                                       "domain": {"lower": [-1], "upper": [1]}})
    assert exc.value.field == "domain"
    with pytest.raises(ConfigError) as exc:
        ex.ExperimentConfig.from_dict({"schema": 1, "bogus": 3})
    with pytest.raises(ConfigError) as exc:
        ex.ExperimentConfig.from_json(tmp_path / "missing.json")
    assert exc.value.field == "--config"


def test_config_hash_is_stable():
    a = ex.ExperimentConfig.default("sweep_T", T=[10.0])
    b = ex.ExperimentConfig.default("sweep_T", T=[10.0])
    assert a.hash == b.hash
    assert a.with_seed(5).hash != a.hash


def test_emit_csv_empty_and_single_row(tmp_path):
    p = ex.emit_csv(ex.SweepResult([]), tmp_path / "e.csv")
    assert p.read_bytes() == HEADER.encode()
    row = {k: None for k in ex.CSV_HEADER}
    row.update(param1=0.1, norm_0=1 / 3)
    text = ex.emit_csv(ex.SweepResult([row]), tmp_path / "one.csv").read_text()
    lines = text.split("\n")
    assert len(lines) == 3 and lines[-1] == ""
    assert lines[1] == "0.10000000000000001,,,0.33333333333333331,,,,,,"


def test_emit_csv_reports_path(tmp_path):
    with pytest.raises(OSError) as exc:
        ex.emit_csv(ex.SweepResult([]), tmp_path / "no" / "such" / "dir.csv")
    assert "dir.csv" in str(exc.value)


def test_sweep_T_columns():
    res = ex.run(ex.ExperimentConfig.default("sweep_T"))
    rows = res.rows
    assert [r["param1"] for r in rows] == [10.0, 100.0, 1000.0]
    n0 = [r["norm_0"] for r in rows]
    n1 = [r["norm_1"] for r in rows]
    assert n0[0] > n0[1] > n0[2]
    assert n1[0] < n1[1] < n1[2]
    assert all(r["norm_inf"] >= 0.5 - 1e-3 for r in rows)
    assert all(r["norm_0"] <= r["bound_0"] for r in rows)
    assert all(r["norm_1"] >= r["lower_bound_1"] for r in rows)
    assert not res.violations
    meta = res.metadata
    assert meta["config_hash"] and len(meta["row_seeds"]) == 3 and meta["seed"] == 0


@pytest.mark.slow
def test_sweep_munu_converges():
    res = ex.run(ex.ExperimentConfig.default("sweep_munu"))
    n1 = [r["norm_1"] for r in res.rows]
    assert len(n1) == 7 and n1[-1] < 0.05
    assert all(a > b for a, b in zip(n1[2:], n1[3:]))
    assert all(r["norm_1"] <= r["bound_1"] for r in res.rows)
    assert res.metadata["classification"] == "mu/nu->0"


def test_mc_validate_matches_closed_form():
    cfg = ex.ExperimentConfig.default("mc_validate", spectrum={"family": "cosine"},
                                      mc={"mu_nu": [[0.1, 0.1]], "points": [[[0.0], [0.0]]],
                                          "random_points": 0, "paths": 2000})
    res = ex.run(cfg)
    (row,) = res.rows
    assert abs(row["mc_mean"] - 0.5) <= 3 * row["mc_stderr"] + 1e-8


def test_inequalities_rows():
    res = ex.run(ex.ExperimentConfig.default("inequalities"))
    assert len(res.rows) == 4 and not res.violations


def test_cli_writes_outputs(tmp_path, capsys):
    code = cli.main(["norms", "--out", str(tmp_path), "--seed", "3"])
    assert code == 0
    csv_text = (tmp_path / "norms.csv").read_text()
    assert csv_text.startswith(HEADER) and csv_text.count("\n") == 2
    meta = json.loads((tmp_path / "norms.json").read_text())
    assert meta["seed"] == 3 and meta["config"]["experiment"] == "norms"


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = write_config(tmp_path, {"schema": 1, "experiment": "sweep_T", "dimension": 7})
    assert cli.main(["sweep-t", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "dimension" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{not json")
    assert cli.main(["sweep-t", "--config", str(tmp_path / "broken.json")]) == 2


def test_cli_violation_exit_code(tmp_path, monkeypatch, capsys):
    # a bound that is trivially too small must be reported, not hidden
    monkeypatch.setattr(ex, "bound_finite_time", lambda bi, T, statement_form=False: 0.0)
    cfg = write_config(tmp_path, {"schema": 1, "experiment": "sweep_T", "T": [10.0]})
    assert cli.main(["sweep-t", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "violation" in capsys.readouterr().err


def test_cli_rejects_bad_flags(capsys):
    with pytest.raises(SystemExit):
        cli.main(["sweep-t", "--seed", "-1"])
    with pytest.raises(SystemExit):
        cli.main(["sweep-t", "--threads", "0"])
    with pytest.raises(SystemExit):
        cli.main(["nonsense"])


def test_threads_env(monkeypatch):
    monkeypatch.setenv("ERGOREG_THREADS", "3")
    assert ex.resolve_threads() == 3
    assert ex.resolve_threads(2) == 2
    monkeypatch.setenv("ERGOREG_THREADS", "many")
    with pytest.raises(ConfigError) as exc:
        ex.resolve_threads()
    assert exc.value.field == "ERGOREG_THREADS"


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, {"schema": 1, "experiment": "lower_bounds",
                                  "lower_bounds": {"T": [10.0, 100.0], "mu": [0.1]}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["lower-bounds", "--config", str(cfg), "--out", str(a), "--threads", "1"]) == 0
    assert cli.main(["lower-bounds", "--config", str(cfg), "--out", str(b), "--threads", "2"]) == 0
    assert (a / "lower_bounds.csv").read_bytes() == (b / "lower_bounds.csv").read_bytes()
    ma = json.loads((a / "lower_bounds.json").read_text())
    mb = json.loads((b / "lower_bounds.json").read_text())
    for key in ("started", "finished", "threads"):
        ma.pop(key), mb.pop(key)
    assert ma == mb


def test_gradients_policy(tmp_path, capsys):
    none = write_config(tmp_path, {"schema": 1, "experiment": "sweep_T", "T": [10.0],
                                   "spectrum": {"gradients": "none"}}, "none.json")
    assert cli.main(["sweep-t", "--config", str(none), "--out", str(tmp_path)]) == 2
    assert "gradient" in capsys.readouterr().err
    fd = ex.run(ex.ExperimentConfig.default("sweep_T", T=[100.0], spectrum={"gradients": "finite_difference"}))
    an = ex.run(ex.ExperimentConfig.default("sweep_T", T=[100.0]))
    assert fd.rows[0]["norm_0"] == an.rows[0]["norm_0"]
    assert fd.rows[0]["norm_1"] == pytest.approx(an.rows[0]["norm_1"], rel=1e-3)
