import subprocess
import sys

from psikit import cli, interp

from helpers import DATA


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "psikit.cli", *args],
        capture_output=True, text=True, check=False)


DIAMOND = str(DATA / "diamond.pir")


def test_run_pipeline_with_verify_exits_zero():
    proc = run_cli("run", DIAMOND, "--passes=ssa,ifconvert,out-of-ssa",
                   "--verify")
    assert proc.returncode == 0, proc.stderr
    assert "psi" not in proc.stdout  # fully out of SSA again


def test_out_of_ssa_without_ssa_is_a_flag_error():
    proc = run_cli("run", DIAMOND, "--passes=out-of-ssa")
    assert proc.returncode == 1
    assert "requires 'ssa'" in proc.stderr


def test_in_ssa_inputs_can_skip_construction():
    proc = run_cli("run", str(DATA / "order_swap.pir"), "--in-ssa",
                   "--passes=out-of-ssa", "--verify")
    assert proc.returncode == 0, proc.stderr


def test_parse_error_exits_one():
    proc = run_cli("run", str(DATA / "missing.pir"))
    assert proc.returncode == 1


def test_unknown_pass_exits_one():
    proc = run_cli("run", DIAMOND, "--passes=ssa,frobnicate")
    assert proc.returncode == 1
    assert "unknown pass" in proc.stderr


def test_evaluate_function():
    proc = run_cli("run", DIAMOND, "--passes=ssa", "--func", "@f",
                   "--args", "5,1")
    assert proc.returncode == 0
    assert proc.stdout.strip().endswith("result: 6")


def test_identical_invocations_are_byte_identical():
    args = ("run", DIAMOND, "--passes=ssa,ifconvert,psi-promote,out-of-ssa",
            "--dump-after=ifconvert", "--dump-liveness", "--dump-interference")
    first, second = run_cli(*args), run_cli(*args)
    assert first.returncode == second.returncode == 0
    assert first.stdout == second.stdout


def test_fuzz_subcommand_reports_zero_mismatches():
    proc = run_cli("fuzz", "--trials", "10", "--seed", "7",
                   "--passes=ssa,fold,ifconvert,psi-promote,out-of-ssa")
    assert proc.returncode == 0, proc.stderr
    assert "0 mismatches" in proc.stdout


def test_stats_table_shapes():
    proc = run_cli("run", DIAMOND, "--stats")
    assert proc.returncode == 0
    assert "without psi-predicate promotion" in proc.stdout
    assert "with psi-predicate promotion" in proc.stdout
    for row in ("psi-normalize", "psi-congruence", "phi-congruence",
                "total copies"):
        assert row in proc.stdout


def test_stats_csv_is_machine_readable():
    proc = run_cli("run", DIAMOND, "--stats", "--stats-format=csv")
    assert proc.returncode == 0
    lines = [l for l in proc.stdout.splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    assert header[0] == "phase" and len(header) == 4
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == 4


def test_verification_mismatch_exits_two(monkeypatch, capsys):
    bad = interp.DiffReport(trials=1, compared=1, skipped=0, mismatches=[
        interp.Mismatch([0], [0], interp.ExecResult(value=1),
                        interp.ExecResult(value=2))])
    monkeypatch.setattr(cli.interp, "differential_check",
                        lambda *a, **k: bad)
    code = cli.main(["run", DIAMOND, "--passes=ssa", "--verify"])
    assert code == 2
    assert "mismatch" in capsys.readouterr().err


def test_mixed_improvement_flags_accepted():
    proc = run_cli("run", DIAMOND, "--passes=ssa,ifconvert,out-of-ssa",
                   "--no-left-only", "--no-ignore-result", "--phi-naive",
                   "--machine=partial", "--verify")
    assert proc.returncode == 0, proc.stderr
