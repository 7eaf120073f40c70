import json
import subprocess
import sys

import numpy as np
import pytest

from proxsplit import cli
from proxsplit.checks import PropertyResult
from proxsplit.portfolio import load_returns, synthetic_data
from proxsplit.engine import TRACE_COLUMNS


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("scheme", ["DRS", "CP", "RelaxedDRS", "FDR", "ParallelFDR", "SequentialFDR"])
def test_run_builtin_schemes(tmp_path, capsys, scheme):
    code, out, _ = _run(capsys, "run", "--scheme", scheme, "--mode", "both", "--dim", "6",
                        "--out", str(tmp_path), "--max-iter", "3000")
    assert code == 0
    info = json.loads(out)
    assert info["direct_converged"] and info["block_converged"]
    assert info["max_deviation"] < 1e-8
    header = (tmp_path / f"{scheme}_direct.csv").read_text().splitlines()[0]
    assert header == ",".join(TRACE_COLUMNS)


def test_run_is_byte_deterministic(tmp_path, capsys):
    outs = []
    for i in range(2):
        d = tmp_path / str(i)
        code, _, _ = _run(capsys, "run", "--scheme", "FDR", "--seed", "5", "--out", str(d))
        assert code == 0
        outs.append((d / "FDR_direct.csv").read_bytes())
    assert outs[0] == outs[1]


def test_timing_column_only_when_requested(tmp_path, capsys):
    _run(capsys, "run", "--scheme", "DRS", "--out", str(tmp_path), "--max-iter", "5", "--tol", "0")
    rows = (tmp_path / "DRS_direct.csv").read_text().splitlines()[1:]
    assert all(r.endswith(",") for r in rows)
    _run(capsys, "run", "--scheme", "DRS", "--out", str(tmp_path), "--max-iter", "5", "--tol", "0",
         "--timing")
    rows = (tmp_path / "DRS_direct.csv").read_text().splitlines()[1:]
    assert all(float(r.rsplit(",", 1)[1]) >= 0 for r in rows)


def test_run_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "DRS", "sigma": 0.5, "theta": 1.5}))
    code, out, _ = _run(capsys, "run", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["config"]["sigma"] == 0.5


def test_run_monitor(tmp_path, capsys):
    code, out, _ = _run(capsys, "run", "--scheme", "SequentialFDR", "--monitor", "--out", str(tmp_path))
    assert code == 0
    assert all(m["ok"] for m in json.loads(out)["monitors"])


def test_run_benchmark_variant(tmp_path, capsys):
    code, out, _ = _run(capsys, "run", "--scheme", "SeqFDRv1", "--n", "5", "--T", "30",
                        "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["direct_converged"]


def test_config_errors_exit_2(tmp_path, capsys):
    assert _run(capsys, "run", "--scheme", "Nope", "--out", str(tmp_path))[0] == 2
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"kind": "FDR", "gamma": 9.0}))
    assert _run(capsys, "run", "--config", str(cfg), "--out", str(tmp_path))[0] == 2
    cfg.write_text("{not json")
    assert _run(capsys, "run", "--config", str(cfg), "--out", str(tmp_path))[0] == 2
    cfg.write_text(json.dumps({"kind": "FDR", "bogus": 1}))
    assert _run(capsys, "run", "--config", str(cfg), "--out", str(tmp_path))[0] == 2
    assert _run(capsys, "run", "--out", str(tmp_path))[0] == 2


def test_io_errors_exit_3(tmp_path, capsys):
    assert _run(capsys, "run", "--config", str(tmp_path / "missing.json"))[0] == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,\n2,3\n")
    code, _, err = _run(capsys, "compare", "--data", str(bad), "--out", str(tmp_path))
    assert code == 3 and "row 1" in err
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert _run(capsys, "gendata", "--out", str(blocker / "r.csv"))[0] == 3


def test_gendata_round_trip(tmp_path, capsys):
    path = tmp_path / "r.csv"
    code, _, _ = _run(capsys, "gendata", "--seed", "9", "--n", "7", "--T", "40", "--out", str(path))
    assert code == 0
    assert np.array_equal(load_returns(path).returns, synthetic_data(9, 7, 40).returns)


def test_rates(capsys):
    code, out, _ = _run(capsys, "rates")
    assert code == 0
    certs = json.loads(out)
    assert [c["case_id"] for c in certs] == [1, 2, 3]
    for c in certs:
        assert c["rate"] == pytest.approx(2.0 / 3.0)
    assert _run(capsys, "rates", "--mu", "-1")[0] == 2


def test_check_passes(capsys):
    code, out, _ = _run(capsys, "check", "--dim", "5", "--samples", "50")
    assert code == 0
    assert out.count("PASS") >= 19 and "FAIL" not in out


def test_check_reports_violation(monkeypatch, capsys):
    fake = [PropertyResult("fejer[DRS]", False, 1.0, 1e-10, "M-Fejer monotone iterates")]
    monkeypatch.setattr(cli, "run_suite", lambda **kw: fake)
    code, out, _ = _run(capsys, "check")
    assert code == 1
    assert "FAIL fejer[DRS]" in out and "M-Fejer" in out


def test_check_validates_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "FDR", "gamma": 5.0, "beta": 1.0}))
    code, out, _ = _run(capsys, "check", "--dim", "4", "--samples", "10", "--config", str(cfg))
    assert code == 2


def test_compare_writes_summary(tmp_path, capsys):
    code, _, _ = _run(capsys, "compare", "--n", "5", "--T", "30", "--variants", "SeqFDRv1", "ParFDR",
                      "--out", str(tmp_path))
    assert code == 0
    table = json.loads((tmp_path / "summary.json").read_text())
    assert set(table) == {"SeqFDRv1", "ParFDR"}
    for row in table.values():
        assert row["final_distance"] < 1e-6
    assert (tmp_path / "ParFDR.csv").exists()
    assert _run(capsys, "compare", "--variants", "Bad", "--out", str(tmp_path))[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "proxsplit", "rates", "--sigma", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)[0]["sigma"] == 2.0


def test_lipschitz_flag_changes_step(tmp_path, capsys):
    gammas = []
    for conv in ("gradient", "spectral"):
        code, out, _ = _run(capsys, "run", "--scheme", "SeqFDRv1", "--n", "5", "--T", "30",
                            "--lipschitz", conv, "--out", str(tmp_path))
        assert code == 0
        gammas.append(json.loads(out)["gamma"])
    assert gammas[1] > gammas[0]
