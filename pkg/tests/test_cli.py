import csv
import io
import json
import subprocess
import sys

import pytest

from flagsim import harness
from flagsim.cli import main, read_config
from flagsim.errors import UsageError


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_run_exact_sweep_nine(capsys):
    assert main(["run", "--algo", "exact-count", "--n", "9", "--k", "3", "--trials", "9",
                 "--start", "sweep"]) == 0
    out = rows(capsys.readouterr().out)
    assert len(out) == 10
    assert [r["start"] for r in out[:9]] == [str(i) for i in range(9)]
    assert all(r["valid_exact"] == "true" for r in out[:9])
    assert out[-1]["trial"] == "summary"


def test_column_order(capsys):
    main(["run", "--algo", "silent-count", "--n", "5"])
    header = capsys.readouterr().out.splitlines()[0].split(",")
    assert header[:12] == ["trial", "n", "a", "b", "k", "start", "rounds", "msg_bits",
                           "peak_mem_bits", "valid_exact", "valid_eps", "frac_correct"]


def test_witness_command(capsys):
    assert main(["witness", "--a", "3", "--b", "1", "--eps", "0.0833"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["residual_d1"] < 1e-9 and rec["residual_d2"] < 1e-9


def test_diagnose_command(capsys):
    assert main(["diagnose", "--n", "30", "--k", "3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert all(r["ok"] for r in rep)


def test_timeout_exit_code(tmp_path):
    out = tmp_path / "t.csv"
    code = main(["run", "--algo", "bubble-sort", "--n", "40", "--trials", "2",
                 "--max-rounds", "5", "--out", str(out)])
    assert code == 3
    recs = rows(out.read_text())
    assert [r["status"] for r in recs[:2]] == ["timeout", "timeout"]


def test_failed_gate_exit_code(tmp_path):
    # a tiny delta makes the counters too coarse for the 0.95 gate
    code = main(["run", "--algo", "approx-count", "--n", "300", "--k", "3", "--eps", "0.05",
                 "--delta", "0", "--trials", "10", "--out", str(tmp_path / "a.csv")])
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["run", "--algo", "approx-count", "--n", "30", "--k", "3", "--eps", "0.3"],
    ["run", "--algo", "nope", "--n", "3"],
    ["run", "--algo", "up-down", "--a", "3"],
    ["run", "--algo", "exact-count", "--n", "5", "--start", "9"],
    ["sweep", "--algo", "exact-count", "--n", "5"],
])
def test_usage_errors(argv):
    assert main(argv) == 1


def test_parse_range_empty():
    with pytest.raises(UsageError):
        harness.parse_range(" , ")
    assert harness.parse_range("1..3,7") == [1, 2, 3, 7]


def test_sigma_relative():
    assert harness.parse_sigma("2/n", 1000) == pytest.approx(0.002)
    assert harness.parse_sigma("0.01", None) == 0.01


def test_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# exact count\nalgo = exact-count\nn = 7\nk = 2\ntrials = 2\n")
    assert read_config(str(cfg))["n"] == "7"
    assert main(["run", "--config", str(cfg), "--n", "8"]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0]["n"] == "8" and out[0]["k"] == "2" and len(out) == 3


def test_jobs_keep_trial_order():
    base = harness.RunConfig(algo="approx-count", n=120, k=3, eps=0.2, trials=6,
                             start="random", seed=4)
    one, _, _ = harness.cmd_run(base)
    two, _, _ = harness.cmd_run(harness.RunConfig(**{**harness.to_mapping(base), "jobs": 2}))
    assert one == two


def test_delivery_log_recount(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--algo", "exact-count", "--n", "17", "--trials", "5", "--start",
                 "random", "--log-deliveries", "--out", str(out)]) == 0
    recount = harness.recount_bits(open(str(out) + ".deliveries.jsonl"))
    for r in rows(out.read_text())[:-1]:
        assert int(r["msg_bits"]) == recount[int(r["trial"])]


def test_sweep_writes_cells_and_table(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--algo", "exact-count,silent-count,bubble-sort",
                 "--n", "16,32", "--k", "3", "--out", str(out)]) == 0
    table = rows((out / "table.csv").read_text())
    assert len(table) == 6
    assert len(list(out.glob("algo-*.csv"))) == 6
    for r in table:
        assert r["bound_ok"] == "true"
        assert float(r["max_rounds"]) <= float(r["bound_rounds"])


def test_sweep_all_starts_worst_case():
    cells, table, code = harness.cmd_sweep(harness.RunConfig(algo="exact-count", k=3,
                                                             start="sweep"), {"n": [32]})
    (rec,) = rows(table)
    assert rec["trials"] == "32" and code == 0
    assert float(rec["max_rounds"]) <= (2 - 1 / 3) * 32 + 6


def test_hybrid_sweep_tradeoff():
    cells, table, code = harness.cmd_sweep(
        harness.RunConfig(model="hybrid", algo="repair", n=400, trials=3),
        {"sigma": [1 / 400, 4 / 400]})
    out = rows(table)
    assert list(out[0]) == ["sigma", "trial", "s_T1", "s_T2", "repair_rounds",
                            "frac_correct_norepair", "frac_correct_repair"]
    assert len(out) == 6


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "flagsim", "run", "--algo", "exact-count",
                          "--n", "4"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("trial,")


def test_byte_identical_reruns(tmp_path):
    argv = ["run", "--algo", "approx-count", "--n", "500", "--k", "3", "--eps", "0.2",
            "--trials", "4", "--start", "random", "--seed", "11"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(argv + ["--out", str(a)])
    main(argv + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
