import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adra.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("command", ["main", "run", "measure", "credibility", "iron", "reserve"])
def test_help_matches_golden(command, capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    argv = ["--help"] if command == "main" else [command, "--help"]
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert out == (GOLDEN / f"help_{command}.txt").read_text()


def test_reserve_exponential(capsys):
    code, out, _ = run(capsys, "reserve", "--dist", "exponential", "--rate", "1")
    assert code == 0 and float(out) == 1.0


def test_iron_modified_er(capsys):
    code, out, _ = run(capsys, "iron", "--dist", "modified-er", "--n", "4")
    assert code == 0
    assert json.loads(out)["intervals"] == [[1.0, 4.0]]


def test_run_adra_sampled(capsys):
    code, out, _ = run(capsys, "run", "--protocol", "adra", "--dist", "equal-revenue", "--n", "2",
                       "--eps", "1", "--reserve", "1", "--seed", "7")
    doc = json.loads(out)
    assert code == 0
    assert doc["outcome"]["winner"] is not None
    assert doc["outcome"]["payment"] >= 1.0


def test_run_adra_fixed_values_trace(capsys):
    code, out, _ = run(capsys, "run", "--values", "1,8", "--reserve", "1", "--eps", "1")
    doc = json.loads(out)
    assert doc["outcome"]["winner"] == 1 and doc["outcome"]["payment"] == 1.0
    kinds = [(m["bidder"], m["kind"], m["level"]) for m in doc["transcript"]]
    assert kinds == [(0, "commit", None), (1, "commit", None), (0, "quit", 0), (1, "raise", 0),
                     (0, "reveal", None), (1, "reveal", None),
                     (0, "forward_reveals", None), (1, "forward_reveals", None)]


def test_run_apa_single_bidder_pays_reserve(capsys):
    code, out, _ = run(capsys, "run", "--protocol", "apa", "--n", "1", "--values", "3", "--reserve", "2")
    doc = json.loads(out)
    assert doc["outcome"]["winner"] == 0 and doc["outcome"]["payment"] == 2.0


def test_run_is_deterministic(capsys):
    argv = ["run", "--n", "4", "--seed", "11", "--eps", "0.5"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_measure_writes_files_to_env_dir(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("ADRA_OUTPUT_DIR", str(tmp_path))
    code, out, _ = run(capsys, "measure", "--dist", "equal-revenue", "--n-sweep", "2,8", "--reserve", "1",
                       "--trials", "500")
    assert code == 0
    assert json.loads(out)["verdict"] == "pass"
    assert (tmp_path / "measure.jsonl").exists() and (tmp_path / "measure.csv").exists()


def test_measure_apa_sweep_passes(capsys, tmp_path):
    code, out, _ = run(capsys, "measure", "--protocol", "apa", "--n-sweep", "8,32", "--eps", "0.5",
                       "--reserve", "1", "--trials", "10000", "--output", str(tmp_path / "apa"))
    assert code == 0
    assert json.loads(out)["apa_fit"]["c"] <= 5


def test_config_file_with_flag_override(capsys, tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# sweep\nprotocol = adra\ndist = exponential\nn-sweep = 2,4\ntrials = 200\nseed = 3\n"
                   f"output = {tmp_path / 'from_file'}\n")
    code, out, _ = run(capsys, "measure", "--config", str(cfg), "--trials", "300")
    doc = json.loads(out)
    assert code == 0
    assert [c["n"] for c in doc["cells"]] == [2, 4]
    assert all(c["trials"] == 300 for c in doc["cells"])
    assert doc["output"] == str(tmp_path / "from_file")


def test_credibility_report(capsys, tmp_path):
    report_path = tmp_path / "cred.json"
    code, out, _ = run(capsys, "credibility", "--dist", "equal-revenue", "--n", "1", "--trials", "2000",
                       "--output", str(report_path))
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "pass"
    assert json.loads(report_path.read_text()) == doc
    assert {"label", "mean", "stderr", "passed"} <= set(doc["sweep"]["policies"][0])


@pytest.mark.parametrize("argv", [
    ["nope"],
    ["run", "--bogus"],
    ["run", "--n", "two"],
    ["run", "--protocol", "dutch"],
    ["run", "--reserve", "cheap"],
    ["run", "--values", "1,x"],
    ["run", "--values", "1,-2"],
    ["run", "--dist", "cauchy"],
    ["measure", "--trials", "5"],
    ["measure", "--n-sweep", "8,4"],
    ["measure", "--config", "/nonexistent/file.cfg"],
    ["iron", "--dist", "modified-er"],
    [],
])
def test_usage_errors_exit_2(argv, capsys, tmp_path):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err


@pytest.mark.parametrize("text", ["protocol adra\n", "colour = blue\n", "trials = many\n", "protocol = dutch\n",
                                  " = 3\n"])
def test_malformed_config_exit_2(text, capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _, err = run(capsys, "measure", "--config", str(cfg))
    assert code == 2 and err


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(alphabet="abcdefghijklmnopqrstuvwxyz_-=#0123456789 .,\n", max_size=20), max_size=6))
def test_arbitrary_config_never_crashes(tmp_path_factory, lines):
    cfg = tmp_path_factory.mktemp("cfg") / "c.cfg"
    cfg.write_text("\n".join(lines))
    code = main(["reserve", "--config", str(cfg)])
    assert code in (0, 2)
