"""Command-line smoke tests."""
import csv
import json
import subprocess
import sys

import pytest

from risee.cli import build_parser, main


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({"N": 4, "trials": 2, "schemes": ["a", "g"], "timing": False,
                                "sweep": {"variable": "P_tmax", "grid": [0, 20]},
                                "solver": {"max_sca": 10}}))
    return path


def test_parser_flags():
    args = build_parser().parse_args(["sweep", "--config", "c.json", "--seed", "3", "--out", "o.csv",
                                      "--format", "json", "--threads", "2", "--preset", "desk"])
    assert (args.seed, args.format, args.threads, args.preset) == (3, "json", 2, "desk")
    with pytest.raises(SystemExit):
        build_parser().parse_args(["sweep", "--format", "xml"])
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_sweep_writes_records_and_summary(tmp_path, config, fmt, capsys):
    out = tmp_path / f"run.{fmt}"
    assert main(["sweep", "--config", str(config), "--preset", "desk", "--out", str(out),
                 "--format", fmt, "--seed", "5"]) == 0
    summary = tmp_path / f"run_summary.{fmt}"
    assert out.exists() and summary.exists()
    if fmt == "csv":
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 2 * 2 * 2 and {r["seed"] for r in rows} == {"5", "4"}
    else:
        assert len(json.loads(out.read_text())["records"]) == 8
    assert "scheme" in capsys.readouterr().out


def test_sweep_output_is_reproducible(tmp_path, config):
    for name in ("x.csv", "y.csv"):
        assert main(["sweep", "--config", str(config), "--preset", "desk", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "x.csv").read_bytes() == (tmp_path / "y.csv").read_bytes()


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_single_prints_trace(tmp_path, config, fmt, capsys):
    out = tmp_path / "single.txt"
    assert main(["single", "--config", str(config), "--preset", "desk", "--scheme", "a",
                 "--format", fmt, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    if fmt == "json":
        doc = json.loads(text)
        assert doc["trace"]["converged"] and doc["report"]["see_true"] > 0
    else:
        assert "converged: True" in text and "see_true" in text
    assert out.read_text().strip() == text.strip()


def test_validate_passes(tmp_path):
    out = tmp_path / "checks.csv"
    assert main(["validate", "--seed", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows and all(r["passed"] == "True" for r in rows)


def test_bad_config_exits_with_code_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert main(["sweep", "--config", str(bad)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "risee", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sweep" in res.stdout
