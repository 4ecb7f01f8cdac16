import json

import pytest

from v2iflow import experiments as ex
from v2iflow.cli import main
from v2iflow.config import ScenarioConfig, dump_config
from v2iflow.geometry import SinrCoefficients


def test_sweep_spec_validation():
    with pytest.raises(ValueError, match="unknown experiment"):
        ex.SweepSpec("no_such_sweep")
    with pytest.raises(ValueError, match="increasing"):
        ex.SweepSpec("vdata_vs_mu", grid=[0.002, 0.001])
    spec = ex.SweepSpec("outage_vs_mu")
    assert len(spec.grid) == 10
    assert spec.config.rate_threshold == 1e8 and spec.config.mu_max == 0.02


def test_csv_schema_and_row_order():
    text = ex.run_sweep(ex.SweepSpec("vdata_vs_mu", grid=[5e-4, 0.002, 0.006]))
    lines = text.splitlines()
    assert lines[0] == ",".join(ex.CSV_COLUMNS)
    rows = ex.read_rows(text)
    assert len(rows) == 2 * 3 * 3
    assert [r["x"] for r in rows[:3]] == ["0.0005", "0.002", "0.006"]
    # infeasible points are kept and labelled
    assert rows[0]["feasible"] == "false" and rows[0]["analytic"] == ""
    assert rows[1]["feasible"] == "true"


def test_concurrent_grid_keeps_order_and_bytes():
    spec = dict(experiment="capacity_vs_mu", grid=[0.002, 0.006, 0.01], trials=20_000, seed=3)
    serial = ex.run_sweep(ex.SweepSpec(**spec))
    threaded = ex.run_sweep(ex.SweepSpec(**spec, workers=4, shards=2))
    assert serial == threaded


def test_capacity_rows_pair_analytic_and_simulation():
    rows = ex.read_rows(ex.run_sweep(ex.SweepSpec("capacity_vs_mu", grid=[0.002, 0.01],
                                                  trials=100_000, seed=1)))
    for r in rows:
        analytic, mc, err = float(r["analytic"]), float(r["mc"]), float(r["mc_stderr"])
        assert abs(analytic - mc) <= 5 * err + 1e-9 * analytic


def test_flow_vs_mu_variants():
    rows = ex.read_rows(ex.run_sweep(ex.SweepSpec("flow_vs_mu", grid=[0.002, 0.008])))
    variants = list(dict.fromkeys(r["variant"] for r in rows))
    assert variants == [f"d_safe={d};interference={m}" for d in ("5", "20", "50")
                        for m in ("on", "off")]


def test_validate_passes_at_defaults():
    report = ex.validate(ScenarioConfig(), 100_000, 17)
    failed = [c for c in report.checks if not c.passed]
    assert not failed, failed
    assert report.to_csv().startswith("check,measured,tolerance,passed,detail\n")


def test_validate_reports_bad_coefficients():
    report = ex.validate(ScenarioConfig(), 20_000, 1, extra_coefficients=[
        SinrCoefficients(1.0, (0.5,)), {"a": 1.0, "b": [0.5, -0.2]}])
    extra = [c for c in report.checks if c.name.startswith("extra")]
    assert [c.passed for c in extra] == [True, False]
    assert "b[1]" in extra[1].detail
    assert not report.passed


# -- command line ---------------------------------------------------------------


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["sweep", "outage_vs_mu"]) == 2
    assert "--seed" in capsys.readouterr().err
    assert main(["optimize", "--set", "v_max=fast"]) == 2
    assert main(["optimize", "--set", "unknown=1"]) == 2
    assert main(["sweep", "nope"]) == 2
    assert main(["outage", "--mu", "0.004"]) == 2
    bad = tmp_path / "coeffs.json"
    bad.write_text(json.dumps([{"a": 1.0, "b": [-1.0]}]))
    out = tmp_path / "v.csv"
    code = main(["validate", "--seed", "1", "--trials", "20000", "--out", str(out),
                 "--coefficients", str(bad)])
    assert code == 1 and out.exists()


def test_cli_optimize_and_point_queries(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    dump_config(ScenarioConfig(path_loss_exp=4.0), cfg)
    assert main(["optimize", "--config", str(cfg)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["feasible"] and doc["binding"] == "data"
    assert main(["outage", "--mu", "0.004", "--v", "20", "--seed", "2", "--trials", "50000"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["outage"] - doc["mc_outage"]) < 0.01
    assert main(["capacity", "--mu", "0.002", "--v", "10"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ergodic_rate_mbps"] == pytest.approx(40 * 3.3271890189798348, rel=1e-8)


def test_cli_grid_forms(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "vdata_vs_mu", "--grid", "0.001:0.003:3", "--out", str(a)]) == 0
    assert main(["sweep", "vdata_vs_mu", "--grid", "0.001,0.002,0.003", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["sweep", "vdata_vs_mu", "--grid", "0.001:0.003:1"]) == 2
