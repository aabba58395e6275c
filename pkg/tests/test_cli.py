import csv
import json

import pytest

from conftest import FIXTURES
from wnetlab import sample_path
from wnetlab.cli import main

MINIMAL = str(FIXTURES / "configs" / "minimal.yaml")


def tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file()}


def test_validate_ok(capsys):
    assert main(["validate", MINIMAL]) == 0
    assert capsys.readouterr().out.startswith("ok: 3 nodes")


def test_validate_bad_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("duration: 60\ntopology: {num_nodes: 3, structure: ring}\nbogus: 1\n")
    assert main(["validate", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "stage=config" in err and "line 3" in err and "E_UNKNOWN_KEY" in err


def test_missing_config_is_io_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.yaml")]) == 4
    assert "stage=config" in capsys.readouterr().err


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["plan", MINIMAL, "--out", str(blocker / "sub")]) == 4


def test_sweep_outputs(tmp_path):
    assert main(["sweep", "--nodes", "50:150:50", "--out", str(tmp_path), "--quiet"]) == 0
    rows = list(csv.DictReader((tmp_path / "hosts.csv").open()))
    assert [int(r["n_nodes"]) for r in rows] == [50, 100, 150]
    assert rows[0]["private-cloud"] == "9"
    costs = list(csv.DictReader((tmp_path / "cost.csv").open()))
    assert len(costs) == 3 * 4 * 2


def test_sweep_json_and_bad_model(tmp_path):
    assert main(["sweep", "--nodes", "10", "--format", "json", "--out", str(tmp_path),
                 "--quiet"]) == 0
    assert json.loads((tmp_path / "hosts.json").read_text())[0]["n_nodes"] == 10
    assert main(["sweep", "--models", "mainframe", "--out", str(tmp_path)]) == 2


def test_quiet_prints_nothing(tmp_path, capsys):
    assert main(["plan", MINIMAL, "--out", str(tmp_path), "--quiet"]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads((tmp_path / "plan.json").read_text())["hosts"] == 1


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("MENES_OUT", str(tmp_path / "envout"))
    assert main(["compile", MINIMAL, "--quiet"]) == 0
    assert (tmp_path / "envout" / "bundle" / "manifest.json").exists()


def test_cost_command(tmp_path):
    assert main(["cost", MINIMAL, "--out", str(tmp_path), "--months", "0", "--quiet"]) == 0
    rows = {r["environment"]: r for r in csv.DictReader((tmp_path / "cost.csv").open())}
    assert float(rows["in-house"]["total"]) == 10_000
    assert float(rows["cloud"]["total"]) == 0


def test_run_twice_identical_and_report(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", str(sample_path()), "--duration", "10", "--out", str(out),
                     "--quiet"]) == 0
    assert tree(a) == tree(b)
    assert main(["report", str(a)]) == 0
    assert capsys.readouterr().out.startswith("flow_id,src,dst")


def test_run_overrides_seed(tmp_path):
    assert main(["run", MINIMAL, "--seed", "5", "--duration", "5", "--out", str(tmp_path),
                 "--quiet", "--format", "json"]) == 0
    doc = json.loads((tmp_path / "report" / "runtrace.json").read_text())
    assert doc["seed"] == 5 and doc["duration_s"] == 5
    assert (tmp_path / "report" / "metrics.jsonl").exists()


def test_command_required():
    with pytest.raises(SystemExit):
        main([])
