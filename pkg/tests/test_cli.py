"""CLI behaviour: configs, CSV/JSON artifacts, reproducibility, exit codes."""

import csv
import hashlib
import json
from pathlib import Path

import pytest

from ehlab.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, main


def _write_config(tmp_path: Path, payload: dict) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


def _run(tmp_path: Path, payload: dict, out: str = "out") -> tuple[int, Path]:
    cfg = _write_config(tmp_path, payload)
    out_dir = tmp_path / out
    code = main(["run", "--config", str(cfg), "--out", str(out_dir)])
    return code, out_dir


def _read_csv(path: Path):
    with path.open() as fh:
        return list(csv.reader(fh))


def test_fig3_outputs_and_checks(tmp_path):
    code, out = _run(tmp_path, {"kind": "fig3", "b_values": [1, 3], "include_dp": False})
    assert code == EXIT_OK
    rows = _read_csv(out / "fig3.csv")
    assert rows[0] == ["B", "T_ub", "T_off", "T_on", "T_ONA", "T_SNA", "T_SB"]
    assert len(rows) == 3
    b1 = {k: float(v) for k, v in zip(rows[0], rows[1]) if v != "nan"}
    assert b1["T_off"] == pytest.approx(0.27794, abs=5e-4)
    assert b1["T_ONA"] == pytest.approx(0.25, abs=5e-4)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["kind"] == "fig3"
    assert summary["library_version"]
    assert all(c["pass"] for c in summary["checks"])


def test_fig2_columns(tmp_path):
    code, out = _run(tmp_path, {"kind": "fig2", "r_values": [1, 2]})
    assert code == EXIT_OK
    rows = _read_csv(out / "fig2.csv")
    assert rows[0] == ["r", "G", "ref_decay"]
    assert float(rows[1][1]) == pytest.approx(0.7213, abs=2e-3)


def test_custom_single_row(tmp_path):
    code, out = _run(
        tmp_path, {"kind": "custom", "op": "ona", "b": 1.0, "r": 1, "p": 0.5}
    )
    assert code == EXIT_OK
    rows = _read_csv(out / "custom.csv")
    assert len(rows) == 2
    record = dict(zip(rows[0], rows[1]))
    assert float(record["throughput"]) == pytest.approx(0.25)


def test_rerun_is_byte_identical(tmp_path):
    payload = {
        "kind": "table1",
        "p_values": [0.5],
        "r_values": [2],
        "num_slots": 20_000,
        "seed": 9,
    }
    _, out1 = _run(tmp_path, payload, "out1")
    _, out2 = _run(tmp_path, payload, "out2")
    for name in ("table1.csv", "summary.json"):
        d1 = hashlib.sha256((out1 / name).read_bytes()).hexdigest()
        d2 = hashlib.sha256((out2 / name).read_bytes()).hexdigest()
        assert d1 == d2


def test_unknown_key_rejected(tmp_path):
    code, _ = _run(tmp_path, {"kind": "fig2", "r_values": [1], "bogus": 1})
    assert code == EXIT_CONFIG


def test_unknown_kind_rejected(tmp_path):
    code, _ = _run(tmp_path, {"kind": "fig99"})
    assert code == EXIT_CONFIG


def test_unparseable_config(tmp_path):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_custom_parameter(tmp_path):
    code, _ = _run(tmp_path, {"kind": "custom", "op": "ona", "b": 1.0, "r": 1})
    assert code == EXIT_CONFIG


def test_policy_subcommand(capsys):
    assert main(["policy", "ona", "--b", "1", "--r", "1", "--p", "0.5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "0.250000" in out


def test_policy_with_simulation(capsys):
    code = main(
        ["policy", "cp", "--b", "1", "--r", "1", "--p", "0.5", "--simulate", "20000"]
    )
    assert code == EXIT_OK
    assert "simulated" in capsys.readouterr().out


def test_policy_rejects_unknown(capsys):
    assert main(["policy", "zzz", "--b", "1", "--r", "1", "--p", "0.5"]) == EXIT_CONFIG


def test_fig7_small_sweep(tmp_path):
    code, out = _run(tmp_path, {"kind": "fig7", "resolution": 5})
    assert code == EXIT_OK
    rows = _read_csv(out / "fig7.csv")
    cases = {row[0] for row in rows[1:]}
    assert cases == {"single", "dual"}
