import csv
import json

import pytest

from risktrc.cli import main
from risktrc.manifest import MANIFEST_NAME, sha256_file


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def _manifest(out):
    return json.loads((out / MANIFEST_NAME).read_text())


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def gambler(tmp_path):
    code, out = _run(tmp_path, "gen", "generate", "gamblers-ruin")
    assert code == 0
    return out / "model.json"


@pytest.fixture
def chain(tmp_path):
    code, out = _run(tmp_path, "chain", "generate", "chain")
    assert code == 0
    return out / "model.json"


def test_solve_erm_outputs_and_manifest(tmp_path, gambler):
    code, out = _run(tmp_path, "erm", "solve-erm", str(gambler), "--beta", "0.5", "--method", "pi")
    assert code == 0
    doc = json.loads((out / "solve.json").read_text())
    assert doc["status"] == "Bounded" and doc["method"] == "pi"
    rows = _rows(out / "values.csv")
    assert [r["state"] for r in rows] == [str(s) for s in range(8)]
    man = _manifest(out)
    assert man["exit_code"] == 0 and man["command"] == "solve-erm"
    assert "--out" not in man["argv"]
    assert man["inputs"][str(gambler)] == sha256_file(gambler)
    assert set(man["outputs"]) == {"solve.json", "values.csv"}
    assert man["outputs"]["solve.json"] == sha256_file(out / "solve.json")


def test_unbounded_exit_code_and_empty_cells(tmp_path, chain):
    code, out = _run(tmp_path, "erm", "solve-erm", str(chain), "--beta", "0.6")
    assert code == 2
    assert _rows(out / "values.csv")[0]["value"] == ""
    assert _manifest(out)["exit_code"] == 2


def test_iteration_cap_exits_one(tmp_path, gambler):
    code, out = _run(tmp_path, "erm", "solve-erm", str(gambler), "--beta", "0.5", "--method", "vi", "--max-iter", "2")
    assert code == 1
    assert json.loads((out / "solve.json").read_text())["status"] == "MaxIterations"


def test_missing_required_option(tmp_path, gambler, capsys):
    code, _ = _run(tmp_path, "erm", "solve-erm", str(gambler))
    assert code == 1
    assert "--beta" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path, gambler):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("beta = 2.0\nmethod = vi\n")
    code, out = _run(tmp_path, "a", "solve-erm", str(gambler), "--config", str(cfg))
    assert code == 0
    doc = json.loads((out / "solve.json").read_text())
    assert doc["beta"] == 2.0 and doc["method"] == "vi"
    code, out = _run(tmp_path, "b", "solve-erm", str(gambler), "--config", str(cfg), "--beta", "0.25")
    doc = json.loads((out / "solve.json").read_text())
    assert doc["beta"] == 0.25 and doc["method"] == "vi"
    assert _manifest(out)["config_digest"] == sha256_file(cfg)


def test_unknown_config_key(tmp_path, gambler):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("betta = 2.0\n")
    code, _ = _run(tmp_path, "a", "solve-erm", str(gambler), "--config", str(cfg))
    assert code == 1


def test_out_from_environment(tmp_path, gambler, monkeypatch):
    target = tmp_path / "env-out"
    monkeypatch.setenv("RISKTRC_OUT", str(target))
    assert main(["solve-erm", str(gambler), "--beta", "1"]) == 0
    assert (target / "solve.json").exists() and (target / MANIFEST_NAME).exists()


def test_solve_evar_then_simulate(tmp_path, gambler):
    code, out = _run(tmp_path, "evar", "solve-evar", str(gambler), "--alpha", "0.7", "--delta", "0.1")
    assert code == 0
    doc = json.loads((out / "evar.json").read_text())
    per_beta = _rows(out / "per_beta.csv")
    assert len(per_beta) == doc["grid_size"]
    code, sim = _run(
        tmp_path, "sim", "simulate", str(gambler), "--policy", str(out / "evar.json"),
        "--episodes", "300", "--seed", "5", "--alpha-list", "0.3,0.7",
    )
    assert code == 0
    summ = json.loads((sim / "summary.json").read_text())
    assert summ["episodes"] == 300 and len(summ["evar"]) == 2
    assert sum(int(r["count"]) for r in _rows(sim / "histogram.csv")) == 300
    assert _manifest(sim)["seed"] == 5


def test_replay_reproduces_outputs(tmp_path, gambler):
    code, out = _run(tmp_path, "evar", "solve-evar", str(gambler), "--alpha", "0.4", "--delta", "0.05")
    assert code == 0
    again = tmp_path / "again"
    assert main(["replay", str(out / MANIFEST_NAME), "--out", str(again)]) == 0
    first, second = _manifest(out), _manifest(again)
    assert first["outputs"] == second["outputs"]
    assert first["argv"] == second["argv"]


def test_check_reports(tmp_path, gambler):
    code, out = _run(tmp_path, "check", "check", str(gambler))
    assert code == 0
    doc = json.loads((out / "check.json").read_text())
    assert doc["validation"]["valid"] and doc["exhaustive"]["transient"]
    code, lit = _run(tmp_path, "lit", "generate", "gamblers-ruin", "--mode", "literal")
    code, out = _run(tmp_path, "check2", "check", str(lit / "model.json"))
    assert code == 2


def test_check_flags_invalid_model(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_states": 1, "n_actions": 1, "transitions": [[0, 0, -1, 0.5, 0.0]], "mu": [1.0]}))
    code, out = _run(tmp_path, "check", "check", str(bad))
    assert code == 1
    assert not json.loads((out / "check.json").read_text())["validation"]["valid"]


def test_malformed_model_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "n_states": 1,,\n}')
    code, out = _run(tmp_path, "erm", "solve-erm", str(bad), "--beta", "1")
    assert code == 1
    assert "bad.json:2:" in capsys.readouterr().err
    assert _manifest(out)["exit_code"] == 1


def test_generate_csv_and_convert(tmp_path):
    code, out = _run(tmp_path, "gen", "generate", "random", "--states", "3", "--actions", "2", "--format", "csv")
    assert code == 0 and (out / "mu.csv").exists()
    code, _ = _run(tmp_path, "erm", "solve-erm", str(out / "model.csv"), "--beta", "0.3")
    assert code == 0
    code, disc = _run(tmp_path, "disc", "generate", "chain", "--discount", "0.9")
    code, conv = _run(tmp_path, "conv", "convert", str(disc / "model.json"), "--gamma", "0.9")
    assert code == 0
    code, rn = _run(tmp_path, "rn", "solve-erm", str(conv / "model.json"), "--beta", "0")
    assert json.loads((rn / "solve.json").read_text())["objective"] == pytest.approx(-2.0)


def test_fig2_rows(tmp_path):
    code, out = _run(tmp_path, "fig2", "fig2", "--points", "5")
    assert code == 0
    rows = {float(r["beta"]): r for r in _rows(out / "fig2.csv")}
    assert rows[0.6]["trc_value"] == ""
    assert float(rows[0.52]["trc_value"]) < -2.0
    assert all(float(r["discounted_value"]) == pytest.approx(-2.0) for r in rows.values())
    closed = {float(r["beta"]): r["trc_value"] for r in _rows(out / "fig2_closed_form.csv")}
    for b, r in rows.items():
        if r["trc_value"]:
            assert float(r["trc_value"]) == pytest.approx(float(closed[b]), abs=1e-8)


def test_version_and_help():
    assert main(["--help"]) == 0
    assert main(["solve-erm", "--help"]) == 0
    assert main(["no-such-command"]) == 1
