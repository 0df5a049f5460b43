import subprocess
import sys

import pytest

from helpers import FIXTURES


def cat(name):
    return str(FIXTURES / f"{name}.cat")


def parse_lines(out):
    return [line.split() for line in out.splitlines()]


def test_all_pass(run_cli):
    code, out, _ = run_cli("verify", "--all", "--catalog", cat("all_pass"))
    assert code == 0
    rows = parse_lines(out)
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)
    status = {r[0]: r[1] for r in rows}
    assert status["wrong_on_purpose"] == "mismatch"
    assert all(s == "match" for rid, s in status.items() if rid != "wrong_on_purpose")


def test_perturbed_required_entry(run_cli):
    code, out, _ = run_cli("verify", "--all", "--catalog", cat("perturbed"))
    assert code == 1
    row = next(r for r in parse_lines(out) if r[0] == "thm5")
    assert row[1] == "mismatch" and 5 <= int(row[2]) <= 7


def test_malformed(run_cli):
    code, out, err = run_cli("verify", "--all", "--catalog", cat("malformed"))
    assert code == 2 and out == ""
    assert "line 6" in err


def test_divergent(run_cli):
    code, out, _ = run_cli("verify", "--all", "--catalog", cat("divergent"))
    assert code == 3
    assert parse_lines(out)[0][:2] == ["harmonic", "error"]


def test_unknown_id(run_cli):
    code, out, err = run_cli("verify", "--id", "nonexistent")
    assert code == 2 and "nonexistent" in err


@pytest.mark.parametrize("argv", [
    ["verify"],
    ["verify", "--all", "--digits", "3"],
    ["verify", "--all", "--strategy", "guess"],
    ["verify", "--all", "--jobs", "0"],
    ["frobnicate"],
])
def test_usage_errors(run_cli, argv):
    assert run_cli(*argv)[0] == 2


def test_single_id_at_60(run_cli):
    code, out, _ = run_cli("verify", "--id", "thm5", "--digits", "60")
    assert code == 0
    (row,) = parse_lines(out)
    assert row[:2] == ["thm5", "match"] and int(row[2]) >= 40
    assert row[4].endswith("ms")


def test_status_selection(run_cli):
    code, out, _ = run_cli("verify", "--status", "audit", "--digits", "30", "--catalog", cat("all_pass"))
    assert code == 0
    assert [r[0] for r in parse_lines(out)] == ["wrong_on_purpose"]


def test_table_format(run_cli):
    code, out, _ = run_cli("verify", "--all", "--format", "table", "--catalog", cat("all_pass"))
    lines = out.splitlines()
    assert code == 0 and lines[0].split()[0] == "id" and len(lines) == 2 + 4


def test_jobs_deterministic(run_cli):
    args = ("verify", "--all", "--digits", "30", "--catalog", cat("all_pass"))
    _, serial, _ = run_cli(*args)
    code, parallel, _ = run_cli(*args, "--jobs", "2")
    assert code == 0
    strip = lambda out: [r[:4] for r in parse_lines(out)]
    assert strip(serial) == strip(parallel)


def test_jobs_bundled_catalog(run_cli):
    args = ("verify", "--id", "thm5", "--id", "zeta_sum", "--id", "ex1", "--digits", "30")
    _, serial, _ = run_cli(*args)
    code, parallel, _ = run_cli(*args, "--jobs", "2")
    assert code == 0
    assert [r[:4] for r in parse_lines(serial)] == [r[:4] for r in parse_lines(parallel)]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hypident", "verify", "--id", "zeta_sum", "--digits", "30"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert proc.stdout.startswith("zeta_sum match ")
