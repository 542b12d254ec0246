from __future__ import annotations

import io
import json

import pytest

from app.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main
from app.services.csv_io import read_table

BASE = ["--m", "60", "--reps", "3", "--seed", "5", "--quiet"]


def _error_payload(stderr: str) -> dict:
    lines = [line for line in stderr.splitlines() if line.startswith("{")]
    assert lines, stderr
    return json.loads(lines[-1])


def test_topk_to_file(tmp_path):
    out = tmp_path / "topk.csv"
    code = main(["topk", *BASE, "--alpha", "0.2", "--methods", "Simes", "KR-interp", "--out", str(out)])
    assert code == EXIT_OK
    table = read_table(out)
    assert table["method"].tolist() == ["Simes", "KR-interp"]
    assert table.loc[0, "median"] == 0.8
    assert "wall_time" not in table.columns


def test_topk_to_stdout_with_timings(capsys):
    assert main(["topk", *BASE, "--methods", "DKW", "--timings"]) == EXIT_OK
    header = capsys.readouterr().out.splitlines()[0]
    assert header.split(",")[-1] == "wall_time"
    assert header.startswith("m,alpha,method,q25,median,q75")


def test_invalid_alpha_is_config_error(capsys):
    assert main(["topk", *BASE, "--alpha", "1.5"]) == EXIT_CONFIG
    payload = _error_payload(capsys.readouterr().err)
    assert payload["error"] == "ValidationError"


def test_unknown_method_is_config_error(capsys):
    assert main(["online", *BASE, "--methods", "Simes"]) == EXIT_CONFIG
    assert _error_payload(capsys.readouterr().err)["error"] == "ValidationError"


def test_unsupported_config_file(tmp_path, capsys):
    path = tmp_path / "exp.toml"
    path.write_text("x = 1\n", encoding="utf-8")
    assert main(["topk", *BASE, "--config", str(path)]) == EXIT_CONFIG
    assert _error_payload(capsys.readouterr().err)["error"] == "ConfigFileError"


def test_yaml_config_with_flag_override(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("m_grid: [40]\nalpha_grid: [0.1]\nmethods: [Simes, DKW]\ndelta: 0.2\n", encoding="utf-8")
    out = tmp_path / "out.csv"
    code = main(["topk", "--config", str(cfg), "--reps", "2", "--alpha", "0.05", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    table = read_table(out)
    assert set(table["m"]) == {40}
    assert set(table["alpha"]) == {0.05}
    assert table.loc[table["method"] == "Simes", "median"].iloc[0] == pytest.approx(0.05 / 0.2)


def test_replication_failure_exit_code(capsys):
    assert main(["topk", *BASE, "--methods", "KR", "--delta", "0.5"]) == EXIT_FAILURE
    payload = _error_payload(capsys.readouterr().err)
    assert payload["error"] == "ReplicationError"
    assert "m=60" in payload["message"]


def test_coverage_columns(tmp_path):
    out = tmp_path / "cov.csv"
    assert main(["coverage", "--setting", "online", *BASE, "--out", str(out)]) == EXIT_OK
    table = read_table(out)
    assert list(table.columns) == ["m", "alpha", "method", "coverage_rate", "coverage_se"]
    assert table["method"].tolist() == ["Freedman", "KR", "KRU"]


def test_preordered_with_lf_model_and_dump(tmp_path):
    out = tmp_path / "pre.csv"
    dump = tmp_path / "dump.csv"
    args = ["preordered", *BASE, "--vct-model", "lf", "--s-alpha-multiple", "0.5", "--dump", str(dump)]
    assert main([*args, "--out", str(out)]) == EXIT_OK
    assert read_table(out)["method"].tolist() == ["Freedman", "KR", "KRU"]
    dumped = read_table(dump)
    assert list(dumped.columns) == ["index", "pvalue", "label"]
    assert len(dumped) == 60


def test_consistency_from_summary(tmp_path):
    summary = tmp_path / "summary.csv"
    summary.write_text(
        "m,alpha,method,q25,median,q75,coverage_rate,coverage_se,mean_rejections,pi0_hat\n"
        "100,0.2,Simes,0.8,0.8,0.8,,,3,\n"
        "1000,0.2,Simes,0.8,0.8,0.8,,,30,\n"
        "10000,0.2,Simes,0.8,0.8,0.8,,,300,\n",
        encoding="utf-8",
    )
    out = tmp_path / "cons.csv"
    assert main(["consistency", "--input", str(summary), "--out", str(out)]) == EXIT_OK
    table = read_table(out)
    assert table["m"].tolist() == [100, 1000, 10000]
    assert table["gap"].tolist() == pytest.approx([0.6] * 3)


def test_consistency_needs_three_sizes(capsys):
    assert main(["consistency", *BASE, "--methods", "Simes"]) == EXIT_FAILURE
    assert _error_payload(capsys.readouterr().err)["error"] == "InsufficientGridError"


def test_real_data_csv(tmp_path):
    data = tmp_path / "stream.csv"
    data.write_text("p\n0.001\n0.4\n0.0002\n", encoding="utf-8")
    out = tmp_path / "traj.csv"
    code = main(["real-data", str(data), "--column", "p", "--alpha", "0.05", "0.1", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    table = read_table(out)
    assert len(table) == 6
    assert table.columns[0] == "alpha"


def test_real_data_stream_from_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("0.001\n0.7\n"))
    assert main(["real-data", "-", "--quiet"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("alpha,k,alpha_k")
    assert len(lines) == 3


def test_malformed_input_exit_code(tmp_path, capsys):
    data = tmp_path / "bad.csv"
    data.write_text("pvalue\n0.1\n7\n", encoding="utf-8")
    assert main(["real-data", str(data)]) == EXIT_FAILURE
    payload = _error_payload(capsys.readouterr().err)
    assert payload["error"] == "MalformedRowError"
    assert payload["message"].startswith("linha 3:")


@pytest.mark.parametrize(
    ("name", "value", "error"),
    [("FDP_DELTA", "2", "ValidationError"), ("FDP_SEED", "abc", None)],
)
def test_invalid_environment_is_config_error(monkeypatch, capsys, name, value, error):
    monkeypatch.setenv(name, value)
    assert main(["topk", *BASE, "--methods", "Simes"]) == EXIT_CONFIG
    payload = _error_payload(capsys.readouterr().err)
    assert payload["message"]
    if error:
        assert payload["error"] == error
