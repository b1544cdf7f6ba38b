import json
import subprocess
import sys

import pytest

from latslr.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_reduce_solve_verify(tmp_path, capsys):
    out = str(tmp_path)
    code, text, _ = run(capsys, "gen-bdd", "--d", "6", "--kappa", "5", "--alpha", "0.05", "--seed", "3",
                        "--out", out, "--include-secrets")
    assert code == 0
    assert json.loads(text)["d"] == 6
    assert run(capsys, "reduce", "--instance", f"{out}/bdd.json", "--k", "2", "--seed", "4", "--out", out)[0] == 0
    code, text, _ = run(capsys, "solve", "--instance", f"{out}/slr.json", "--out", out)
    assert code == 0 and json.loads(text)["valid"]
    code, text, _ = run(capsys, "verify", "--instance", f"{out}/bdd.json", "--solution", f"{out}/solution.json",
                        "--transcript", f"{out}/transcript.json")
    assert code == 0 and json.loads(text)["verified"]


def test_verify_failure_exit_code(tmp_path, capsys):
    out = str(tmp_path)
    run(capsys, "gen-bdd", "--d", "3", "--seed", "1", "--out", out)
    codes = {run(capsys, "verify", "--instance", f"{out}/bdd.json", f"--z={z}")[0]
             for z in ("1,1,1", "1,1,-1", "1,-1,1", "1,-1,-1", "-1,1,1", "-1,1,-1", "-1,-1,1", "-1,-1,-1")}
    assert codes == {0, 1}


def test_clwe_subcommand(tmp_path, capsys):
    code, text, _ = run(capsys, "clwe", "--m", "4", "--k", "2", "--n", "16", "--seed", "2", "--solve", "--out", str(tmp_path))
    doc = json.loads(text)
    assert code == 0 and doc["distinguisher"] in (0, 1) and doc["provenance"] == "clwe"
    code, text, _ = run(capsys, "clwe", "--m", "4", "--k", "2", "--n", "16", "--null", "--out", str(tmp_path))
    assert code == 0 and json.loads(text)["provenance"] == "null"


def test_experiment_and_plots(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "bdd-completeness", "d": [4], "k": [2], "trials": 3}))
    out = tmp_path / "res"
    code, text, _ = run(capsys, "experiment", "--config", str(cfg), "--seed", "9", "--out", str(out), "--jobs", "1")
    assert code == 0 and json.loads(text)["records"] == 3
    assert (out / "bdd-completeness.csv").exists() and (out / "bdd-completeness.json").exists()
    assert (out / "plot_bdd_completeness.py").exists()
    code, text, _ = run(capsys, "emit-plots", "--csv", str(out / "bdd-completeness.csv"), "--out", str(tmp_path / "p"))
    assert code == 0 and text.strip().endswith("plot_bdd_completeness.py")


@pytest.mark.parametrize(
    "argv",
    [
        ["gen-bdd"],
        ["gen-bdd", "--d", "4", "--alpha", "0.9"],
        ["experiment"],
        ["emit-plots"],
        ["emit-plots", "--kind", "nope"],
        ["frobnicate"],
    ],
)
def test_config_errors_exit_2(argv, tmp_path, capsys):
    with_out = argv + ["--out", str(tmp_path)] if argv and argv[0] != "frobnicate" else argv
    try:
        code = main(with_out)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "bdd-completeness", "k": [3]}))
    assert run(capsys, "experiment", "--config", str(cfg))[0] == 2
    cfg.write_text("[1, 2")
    assert run(capsys, "experiment", "--config", str(cfg))[0] == 2


def test_io_errors_exit_3(tmp_path, capsys):
    assert run(capsys, "reduce", "--instance", str(tmp_path / "missing.json"), "--k", "1")[0] == 3
    assert run(capsys, "experiment", "--config", str(tmp_path / "missing.json"))[0] == 3
    bad = tmp_path / "bdd.json"
    run(capsys, "gen-bdd", "--d", "2", "--out", str(tmp_path))
    doc = json.loads(bad.read_text())
    doc["payload"]["alpha"] = 0.2
    bad.write_text(json.dumps(doc))
    assert run(capsys, "reduce", "--instance", str(bad), "--k", "1")[0] == 3


def test_wrong_object_type(tmp_path, capsys):
    run(capsys, "gen-bdd", "--d", "2", "--out", str(tmp_path))
    assert run(capsys, "solve", "--instance", str(tmp_path / "bdd.json"))[0] == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "latslr.cli", "gen-bdd", "--d", "2", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
