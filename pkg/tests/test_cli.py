import csv
import io
import json
from pathlib import Path

import pytest

from wowgate import cli
from wowgate.config import CONFIG_SCHEMA, expand_config, load_config
from wowgate.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]

SMALL_CONFIG = {
    "defaults": {"endpoint": "binary", "theta_t": 0.4, "theta_h": 0.3, "n": 150, "n_t": 300,
                 "n_h": 600, "reps": 120, "seed": 5},
    "methods": [{"name": "NP", "policy": "np"},
                {"name": "Gated Mix50", "policy": "mix50", "gated": True}],
    "scenarios": [{"id": "a", "theta": 0.3}, {"id": "b", "theta": 0.35}],
}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return path


@pytest.mark.parametrize("nh, xh, expected", [("600", "240", "x_L=49 x_U=71"),
                                              ("75", "30", "x_L=43 x_U=78")])
def test_region_examples(capsys, nh, xh, expected):
    code, out, _ = run(capsys, "region", "--endpoint", "binary", "--n", "150", "--nh", nh, "--xh", xh)
    assert code == 0
    assert out.strip() == expected


def test_region_validation_exit_code(capsys):
    code, _, err = run(capsys, "region", "--endpoint", "binary", "--n", "10", "--nh", "10", "--xh", "20")
    assert code == 2
    assert "x_h exceeds n_h" in err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["region", "--n", "abc"])
    assert exc.value.code == 2


def test_integrity_exit_code(capsys, monkeypatch):
    from wowgate.errors import IntegrityError

    def broken(*_):
        raise IntegrityError("disconnected")

    monkeypatch.setattr(cli, "borrowing_region_binary", broken)
    code, _, err = run(capsys, "region", "--n", "150", "--nh", "600", "--xh", "240")
    assert code == 3 and "disconnected" in err


def test_region_full_table_and_json(capsys):
    code, out, _ = run(capsys, "region", "--n", "150", "--nh", "600", "--xh", "240", "--full",
                       "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 151
    borrow = [int(r["x"]) for r in rows if r["borrow"] == "true"]
    assert (min(borrow), max(borrow)) == (49, 71)
    code, out, _ = run(capsys, "region", "--n", "150", "--nh", "600", "--xh", "240", "--format", "json")
    assert json.loads(out)["x_L"] == 49


def test_region_sweep_nh(capsys):
    code, out, _ = run(capsys, "region", "--n", "150", "--nh", "75", "--xh", "30",
                       "--sweep-nh", "75,150,600", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["x_L"], r["x_U"]) for r in rows] == [("43", "78"), ("46", "74"), ("49", "71")]


def test_region_continuous(capsys):
    code, out, _ = run(capsys, "region", "--endpoint", "continuous", "--n", "150", "--nh", "900",
                       "--ybarh", "0", "--sigma", "3", "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["ybar_L"] < 0 < rec["ybar_U"]


def _record(out):
    return dict(line.split("=", 1) for line in out.strip().splitlines())


def test_gate_examples(capsys):
    code, out, _ = run(capsys, "gate", "--endpoint", "binary", "--x", "60", "--n", "150", "--xh", "240",
                       "--nh", "600", "--policy", "sam", "--delta", "0.15")
    rec = _record(out)
    assert code == 0 and rec["borrow"] == "true" and float(rec["w_h"]) > 0
    code, out, _ = run(capsys, "gate", "--endpoint", "binary", "--x", "90", "--n", "150", "--xh", "240",
                       "--nh", "600", "--policy", "mix", "--w", "0.5")
    rec = _record(out)
    assert rec["borrow"] == "false" and float(rec["w_h"]) == 0.0
    code, out, _ = run(capsys, "gate", "--endpoint", "continuous", "--ybar", "0.0", "--n", "150",
                       "--sigma", "3", "--ybarh", "0", "--s2h", "9", "--nh", "900", "--policy", "fixed",
                       "--w", "1")
    assert _record(out)["borrow"] == "true"


def test_gate_json_round_trip(capsys):
    from wowgate.model import BetaShape, BinaryDataset, HistoricalBinary
    from wowgate.waic import gate_binary

    code, out, _ = run(capsys, "gate", "--x", "60", "--n", "150", "--xh", "240", "--nh", "600",
                       "--format", "json")
    rec = json.loads(out)
    dec = gate_binary(BetaShape(1, 1), BinaryDataset(60, 150), HistoricalBinary(240, 600))
    assert rec["k"] == dec.k and rec["waic0"] == dec.waic0.total and rec["borrow"] is True
    assert rec["ci_lower"] < rec["posterior_mean"] < rec["ci_upper"]


def test_posterior_command(capsys):
    code, out, _ = run(capsys, "posterior", "--x", "60", "--n", "150", "--xh", "240", "--nh", "600",
                       "--policy", "mix50", "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["w_h"] == 0.5 and 0 < rec["w_star"] <= 1


def test_missing_xh(capsys):
    code, _, err = run(capsys, "gate", "--x", "60", "--n", "150", "--nh", "600")
    assert code == 2 and "--xh" in err


@pytest.mark.parametrize("sub", ["region", "gate", "posterior", "simulate", "calibrate"])
def test_help_lists_flags_with_defaults(capsys, sub):
    with pytest.raises(SystemExit) as exc:
        cli.main([sub, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    parser = cli.build_parser()
    subparser = parser._subparsers._group_actions[0].choices[sub]
    for action in subparser._actions:
        for flag in action.option_strings:
            assert flag in out
    if sub in ("region", "gate", "posterior"):
        assert "default: 1" in out and "default: 10" in out


def test_simulate_outputs_are_byte_stable(capsys, tmp_path, small_config):
    out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    assert run(capsys, "simulate", "--config", str(small_config), "--out", str(out1))[0] == 0
    assert run(capsys, "simulate", "--config", str(small_config), "--out", str(out2),
               "--workers", "3")[0] == 0
    assert out1.read_bytes() == out2.read_bytes()
    text = out1.read_text()
    assert "\r" not in text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 4
    for col in ("scenario", "method", "gated", "theta", "theta_t", "theta_h", "n", "n_t", "n_h",
                "power", "bias", "mse", "rel_bias", "rel_mse", "mc_stderr", "C"):
        assert col in rows[0]
    np_rows = [r for r in rows if r["method"] == "NP"]
    assert all(float(r["rel_bias"]) == 0.0 for r in np_rows)


def test_manifest(capsys, tmp_path, small_config):
    import hashlib

    out = tmp_path / "res.json"
    code, _, _ = run(capsys, "simulate", "--config", str(small_config), "--out", str(out),
                     "--format", "json", "--seed", "9")
    assert code == 0
    manifest = json.loads(Path(f"{out}.manifest.json").read_text())
    assert manifest["seed"] == 9 and manifest["command"] == "simulate"
    assert manifest["sha256"] == hashlib.sha256(out.read_bytes()).hexdigest()
    assert manifest["config"]["document"] == SMALL_CONFIG
    assert len(manifest["config"]["runs"]) == 4
    assert {"version", "timestamp"} <= set(manifest)
    rows = json.loads(out.read_text())
    assert rows[0]["scenario"] == "a"


def test_seed_precedence(capsys, tmp_path, small_config, monkeypatch):
    paths = {k: tmp_path / f"{k}.csv" for k in ("env", "flag", "flag2")}
    monkeypatch.setenv("WOW_SEED", "11")
    run(capsys, "calibrate", "--config", str(small_config), "--out", str(paths["env"]))
    run(capsys, "calibrate", "--config", str(small_config), "--out", str(paths["flag"]), "--seed", "11")
    run(capsys, "calibrate", "--config", str(small_config), "--out", str(paths["flag2"]), "--seed", "12")
    assert paths["env"].read_bytes() == paths["flag"].read_bytes()
    assert paths["env"].read_bytes() != paths["flag2"].read_bytes()
    monkeypatch.setenv("WOW_SEED", "eleven")
    code, _, err = run(capsys, "calibrate", "--config", str(small_config), "--out", str(paths["env"]))
    assert code == 2 and "WOW_SEED" in err


def test_small_reps_warns(capsys, tmp_path, small_config):
    code, _, err = run(capsys, "calibrate", "--config", str(small_config), "--out",
                       str(tmp_path / "c.csv"), "--reps", "10")
    assert code == 0 and "unstable" in err


def test_schema_error_is_path_precise(capsys, tmp_path):
    bad = json.loads(json.dumps(SMALL_CONFIG))
    bad["scenarios"][1]["theta"] = "high"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, _, err = run(capsys, "simulate", "--config", str(path), "--out", str(tmp_path / "o.csv"))
    assert code == 2 and "$.scenarios[1].theta" in err


def test_unwritable_output(capsys, tmp_path, small_config):
    code, _, err = run(capsys, "calibrate", "--config", str(small_config), "--reps", "100",
                       "--out", str(tmp_path / "missing" / "o.csv"))
    assert code == 4


def test_config_expansion_errors():
    bad = json.loads(json.dumps(SMALL_CONFIG))
    bad["methods"][0]["params"] = {"gamma": 0.5}
    bad["methods"][0]["policy"] = "sam"
    runs = expand_config(bad)
    assert runs[0].config.policy.delta == 0.15
    bad["defaults"]["theta_h"] = 1.5
    with pytest.raises(ConfigError) as exc:
        expand_config(bad)
    assert exc.value.path == "$.scenarios[0]"
    missing = {"scenarios": [{"theta": 0.3}], "methods": [{"name": "NP", "policy": "np"}]}
    with pytest.raises(ConfigError):
        expand_config(missing)


def test_shipped_configs_and_schema():
    assert json.loads((ROOT / "docs" / "config.schema.json").read_text()) == CONFIG_SCHEMA
    t1 = expand_config(load_config(ROOT / "configs" / "table1.json"))
    t2 = expand_config(load_config(ROOT / "configs" / "table2.json"))
    assert len(t1) == 14 * 7 and len(t2) == 14 * 7
    seeds = {r.scenario_id: r.config.seed for r in t1}
    assert len(set(seeds.values())) == 14
