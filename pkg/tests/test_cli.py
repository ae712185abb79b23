import csv
import io
import json
import math

import pytest

from hdp_mean.cli import ExperimentConfig, fmt, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


PROFILE = ["--eps1", "0.1", "--eps2", "0.15", "--n", "1000", "--f", "0.5"]


def test_weights_json(capsys):
    code, out, _ = run(capsys, "weights", *PROFILE)
    doc = json.loads(out)
    assert code == 0
    assert doc["w1"] == pytest.approx(8e-4) and doc["w2"] == pytest.approx(1.2e-3)
    assert doc["regime"] == "A" and doc["dp_satisfied"]


def test_weights_eps_file(tmp_path, capsys):
    f = tmp_path / "eps.txt"
    f.write_text("0.5\n0.5\n0.5\n0.5\n")
    code, out, _ = run(capsys, "weights", "--eps-file", str(f))
    assert code == 0
    assert json.loads(out)["weights"] == pytest.approx([0.25] * 4)


def test_weights_eps_file_inf_and_csv(tmp_path, capsys):
    f = tmp_path / "eps.txt"
    f.write_text("0.1\ninf\n")
    code, out, _ = run(capsys, "weights", "--eps-file", str(f), "--format", "csv")
    assert code == 0
    table = rows(out)
    assert len(table) == 2 and table[1]["eps"] == "inf"


def test_weights_degenerate(capsys):
    code, out, _ = run(capsys, "weights", "--eps1", "0.01", "--eps2", "0.1", "--n", "1", "--f", "1.0")
    assert code == 0 and json.loads(out)["degenerate"] is True


def test_usage_errors(capsys):
    code, _, err = run(capsys, "weights", "--eps1", "-1", "--eps2", "1", "--n", "5", "--f", "0.5")
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, err = run(capsys, "weights", "--eps1", "0.1")
    assert code == 2
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, _ = run(capsys, "simulate", *PROFILE, "--trials", "5")
    assert code == 2


def test_domain_error_from_file(tmp_path, capsys):
    f = tmp_path / "eps.txt"
    f.write_text("0.1\n-3\n")
    code, _, err = run(capsys, "weights", "--eps-file", str(f))
    assert code == 1 and json.loads(err)["error"] == "domain"


def test_bounds_sweep_saturates(capsys):
    code, out, _ = run(capsys, "bounds", "--eps1", "0.1", "--eps2", "1", "--n", "1000", "--f", "0.7",
                       "--sweep", "eps2:0.1:1.0:19")
    table = rows(out)
    assert code == 0 and len(table) == 19
    after = {r["upper"] for r in table if float(r["eps2"]) > float(r["saturation_eps2"])}
    assert len(after) == 1
    assert all(float(r["lower"]) <= float(r["upper"]) for r in table)
    assert table[0]["schema_version"] == "1"


def test_bounds_homogeneous(capsys):
    code, out, _ = run(capsys, "bounds", "--eps1", "0.2", "--eps2", "0.5", "--n", "300", "--f", "1")
    up = float(rows(out)[0]["upper"])
    assert up == pytest.approx(1 / 1200 + 2 / (300 * 0.2) ** 2, rel=1e-12)


def test_simulate_columns_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", *PROFILE, "--trials", "500", "--seed", "3", "--mechanism", "all"]
    assert run(capsys, *args, "--out", str(a))[0] == 0
    assert run(capsys, *args, "--out", str(b), "--threads", "2")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    table = rows(a.read_text())
    assert list(table[0])[:13] == ["mechanism", "n", "f", "eps1", "eps2", "dist", "trials", "seed", "mse",
                                   "stderr", "analytic_mse", "upper_bound", "reason"]
    adpm = table[0]
    assert float(adpm["mse"]) <= float(adpm["upper_bound"]) + 3 * float(adpm["stderr"])


def test_simulate_infeasible_row(capsys):
    code, out, _ = run(capsys, "simulate", "--eps1", "0.1", "--eps2", "inf", "--n", "100", "--f", "0.5",
                       "--trials", "200", "--mechanism", "propdpm")
    row = rows(out)[0]
    assert code == 0 and row["mse"] == "inf" and row["reason"]


def test_simulate_stretch_point_mass(capsys):
    code, out, _ = run(capsys, "simulate", "--eps1", "0.01", "--eps2", "0.1", "--n", "100", "--f", "0.5",
                       "--mechanism", "stretch", "--dist", "point:0.5", "--ci", "--seed", "1")
    row = rows(out)[0]
    assert abs(float(row["mse"]) - (0.050625 + 0.02)) <= 3 * float(row["stderr"])


def test_seed_env_and_flag(monkeypatch, capsys):
    base = ["simulate", *PROFILE, "--trials", "200", "--mechanism", "uni"]
    monkeypatch.setenv("HDP_MEAN_SEED", "5")
    env_out = run(capsys, *base)[1]
    flag_out = run(capsys, *base, "--seed", "5")[1]
    other = run(capsys, *base, "--seed", "6")[1]
    assert env_out == flag_out != other
    assert rows(env_out)[0]["seed"] == "5"


def test_config_roundtrip_and_override(tmp_path, capsys):
    cfg = ExperimentConfig(command="simulate", eps1=0.1, eps2=math.inf, n=100, f=0.5, mechanisms=["adpm"],
                           trials=300, seed=2)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    code, out, _ = run(capsys, "simulate", "--config", str(path), "--seed", "4")
    row = rows(out)[0]
    assert code == 0 and row["seed"] == "4" and row["eps2"] == "inf"


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{"bogus": 1}')
    assert run(capsys, "weights", "--config", str(path))[0] == 2


def test_audit(capsys):
    code, out, _ = run(capsys, "audit", "--eps1", "0.5", "--eps2", "1", "--n", "6", "--f", "0.5",
                       "--draws", "100000", "--mechanism", "adpm", "--mechanism", "sm")
    doc = json.loads(out)
    assert code == 0 and doc["ok"]
    assert {m["mechanism"] for m in doc["mechanisms"]} == {"adpm", "sm"}


def test_reproduce_weight_ratio(tmp_path, capsys):
    code, _, _ = run(capsys, "reproduce", "weight-ratio", "--out", str(tmp_path))
    assert code == 0
    table = rows((tmp_path / "weight_ratio.csv").read_text())
    for r in table:
        assert float(r["weight_ratio"]) == pytest.approx(float(r["min_r_R"]), rel=1e-12)
    manifest = json.loads((tmp_path / "weight-ratio.manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["version"]


def test_reproduce_table2_small(tmp_path, capsys):
    code, _, _ = run(capsys, "reproduce", "table2", "--trials", "200", "--out", str(tmp_path))
    assert code == 0
    table = rows((tmp_path / "table2.csv").read_text())
    assert len(table) == 12
    assert "FME" not in {r["mechanism"] for r in table}
    manifest = json.loads((tmp_path / "table2.manifest.json").read_text())
    assert "out of scope" in manifest["notes"]


def test_reproduce_fig1b_manifest(tmp_path, capsys):
    code, _, _ = run(capsys, "reproduce", "fig1b", "--trials", "100", "--out", str(tmp_path))
    assert code == 0
    manifest = json.loads((tmp_path / "fig1b.manifest.json").read_text())
    assert manifest["saturation_eps2"] == pytest.approx(0.2142857, rel=1e-6)
    header = (tmp_path / "fig1b.csv").read_text().splitlines()[0]
    assert "mse_x1e4" in header and "saturation_eps2" in header


def test_reproduce_unknown_target(capsys):
    assert run(capsys, "reproduce", "fig9")[0] == 2


def test_number_format():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(math.inf) == "inf" and fmt(float("nan")) == "nan"
    assert fmt(3) == "3"
