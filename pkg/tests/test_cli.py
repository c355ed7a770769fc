import csv
import io
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from interdp import data_path
from interdp.cli import main
from interdp.diagnoser import load_diagnoser

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
DATA = HERE / "data"
REGEN = os.environ.get("INTERDP_REGEN_GOLDEN") == "1"

MODEL = str(data_path("two_nominal_model.json"))
SCENARIO = str(data_path("two_nominal_scenario.json"))


def golden(name: str, text: str) -> None:
    path = GOLDEN / name
    if REGEN:
        path.write_text(text, encoding="utf-8", newline="")
    assert text == path.read_text(encoding="utf-8"), f"output differs from {path}"


def drop_column(text: str, column: str) -> str:
    rows = list(csv.reader(io.StringIO(text)))
    j = rows[0].index(column)
    out = io.StringIO()
    csv.writer(out, lineterminator="\n").writerows([r[:j] + r[j + 1:] for r in rows])
    return out.getvalue()


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_ok(capsys):
    code, out, _ = cli(capsys, "validate", MODEL)
    assert code == 0
    golden("validate_ok.txt", out)


def test_validate_invalid(capsys):
    code, out, err = cli(capsys, "validate", str(DATA / "broken_model.json"))
    assert code == 4
    assert out == "INVALID\n"
    assert "fault must be unobservable: event 'f2'" in err


def test_build_broken_model(capsys):
    code, out, err = cli(capsys, "build", str(DATA / "broken_model.json"), "--dump-text")
    assert code == 4
    assert out == ""
    assert "fault must be unobservable" in err


def test_signatures(capsys):
    code, out, _ = cli(capsys, "signatures", MODEL)
    assert code == 0
    golden("signatures.csv", out)


def test_ba(capsys, tmp_path):
    code, out, _ = cli(capsys, "ba", MODEL)
    assert code == 0
    golden("ba.dot", out)
    code, _, _ = cli(capsys, "ba", MODEL, "-o", str(tmp_path / "ba.dot"))
    assert (tmp_path / "ba.dot").read_text() == out


def test_build(capsys, tmp_path):
    target = tmp_path / "diag.bin"
    code, out, err = cli(capsys, "build", MODEL, "-o", str(target), "--dump-text")
    assert code == 0
    golden("diagnoser.txt", out)
    assert "7 states" in err
    assert target.read_bytes().startswith(b"\x89IDPDIAG")
    assert len(load_diagnoser(target).states) == 7


def test_build_needs_an_output(capsys):
    code, _, err = cli(capsys, "build", MODEL)
    assert code == 1


def test_build_size_cap(capsys):
    code, _, err = cli(capsys, "build", MODEL, "--dump-text", "--max-diagnoser-states", "2")
    assert code == 4
    assert "exceeds 2 states" in err


def test_prognose(capsys):
    code, out, _ = cli(capsys, "prognose", MODEL, "--mode", "q01", "--now", "0")
    assert code == 0
    golden("prognose_q01.csv", out)
    code, out, _ = cli(capsys, "prognose", MODEL, "--mode", "qf1", "--now", "10", "--p-max", "0.5")
    assert code == 0
    golden("prognose_qf1_pmax05.csv", out)


def test_prognose_unknown_mode(capsys):
    code, _, err = cli(capsys, "prognose", MODEL, "--mode", "nope")
    assert code == 1
    assert "unknown mode" in err


def test_simulate(capsys, tmp_path):
    truth = tmp_path / "truth.csv"
    code, out, _ = cli(capsys, "simulate", MODEL, "--scenario", SCENARIO, "--truth", str(truth))
    assert code == 0
    golden("observations.csv", out)
    golden("truth.csv", truth.read_text())


def test_run_golden(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, _ = cli(capsys, "run", MODEL, "--scenario", SCENARIO, "--out", str(trace))
    assert code == 0
    assert out == ""
    text = trace.read_text()
    assert text.splitlines()[0] == "t,hypothesis_rank,mode,faults,next_fault,next_date,rul,ct_p"
    golden("run_trace.csv", drop_column(text, "ct_p"))


def test_run_replay_and_prebuilt_diagnoser(capsys, tmp_path):
    obs = tmp_path / "obs.csv"
    diag = tmp_path / "d.bin"
    assert cli(capsys, "simulate", MODEL, "--scenario", SCENARIO, "--out", str(obs))[0] == 0
    assert cli(capsys, "build", MODEL, "-o", str(diag))[0] == 0
    code, out, _ = cli(capsys, "run", MODEL, "--replay", str(obs), "--diagnoser", str(diag))
    assert code == 0
    assert drop_column(out, "ct_p") == (GOLDEN / "run_trace.csv").read_text()


def test_run_every_tick(capsys):
    code, out, _ = cli(capsys, "run", MODEL, "--scenario", SCENARIO, "--emit-every-tick")
    assert code == 0
    ticks = {row[0] for row in csv.reader(io.StringIO(out))} - {"t"}
    assert len(ticks) == 121


def test_run_unknown_mode(capsys, tmp_path):
    obs = tmp_path / "obs.csv"
    cli(capsys, "simulate", MODEL, "--scenario", SCENARIO, "--out", str(obs))
    lines = obs.read_text().splitlines()
    head, rows = lines[0], lines[1:]
    # a2 is only possible from q02; claim it at t=5 while still in q01
    cells = rows[5].split(",")
    cells[-1] = "a2"
    rows[5] = ",".join(cells)
    obs.write_text("\n".join([head] + rows) + "\n")
    code, out, err = cli(capsys, "run", MODEL, "--replay", str(obs))
    assert code == 2
    assert "unknown mode at t=5.0" in err


def test_run_hyp1_violation(capsys):
    code, _, err = cli(capsys, "run", MODEL, "--scenario", SCENARIO, "--real-time-scale", "1e9")
    assert code == 3
    assert "prognosis time check failed" in err


def test_check_hyp1(capsys):
    code, out, _ = cli(capsys, "check-hyp1", str(DATA / "slow_trace.csv"))
    assert code == 3
    golden("check_hyp1.csv", out)
    code, out, _ = cli(capsys, "check-hyp1", str(DATA / "slow_trace.csv"), "--real-time-scale", "0.01")
    assert code == 3  # the zero interval remains
    assert out.count("\n") == 2


def test_check_hyp1_clean(capsys, tmp_path):
    trace = tmp_path / "t.csv"
    cli(capsys, "run", MODEL, "--scenario", SCENARIO, "--out", str(trace))
    code, out, _ = cli(capsys, "check-hyp1", str(trace))
    assert code == 0
    assert out == "index,t,t_next,ct_p,interval,reason\n"


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["validate", MODEL, "--unknown-flag"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["prognose", MODEL, "--mode", "q01", "--p-max", "1.5"])
    assert exc.value.code == 1
    # a path that does not exist is a bad argument, not a bad model
    assert cli(capsys, "validate", "/no/such/file.json")[0] == 1
    assert cli(capsys, "run", MODEL)[0] == 1
    assert cli(capsys, "signatures", "/no/such/file.json")[0] == 1


def test_help_lists_every_subcommand():
    exe = shutil.which("interdp")
    cmd = [exe] if exe else [sys.executable, "-m", "interdp.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True, check=True)
    for name in ("validate", "signatures", "ba", "build", "prognose", "simulate", "run", "check-hyp1"):
        assert name in res.stdout
    for name in ("validate", "run", "prognose"):
        sub = subprocess.run(cmd + [name, "--help"], capture_output=True, text=True, check=True)
        assert "--p-max" in sub.stdout and "--max-diagnoser-states" in sub.stdout
