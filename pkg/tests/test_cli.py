from __future__ import annotations

import json
import shutil

import pytest

from skilljudge.cli import build_parser, load_config, main


def test_validate_ok(fixtures, capsys):
    assert main(["validate", "--dataset", str(fixtures / "dataset.json")]) == 0
    assert "4 queries ok" in capsys.readouterr().out


def test_validate_bad_label(tmp_path, fixtures, capsys):
    doc = json.loads((fixtures / "dataset.json").read_text())
    doc[0]["L2_information_need"].append("platfrom_data")
    p = tmp_path / "d.json"
    p.write_text(json.dumps(doc, indent=2))
    assert main(["validate", "--dataset", str(p)]) == 1
    assert "platfrom_data" in capsys.readouterr().err


def test_missing_config_file_is_validation_error(tmp_path):
    assert main(["bench", "--config", str(tmp_path / "nope.yaml")]) == 1


def test_eval_case(fixtures, tmp_path, capsys):
    records = tmp_path / "rec.jsonl"
    code = main(["eval", "--config", str(fixtures / "case" / "config.yaml"), "--query-id", "101",
                 "--report", str(fixtures / "case" / "report.txt"), "--records", str(records)])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["s_final"] == pytest.approx(0.125)
    assert records.read_text().count('"type":"result"') == 1


def test_eval_unknown_query(fixtures):
    assert main(["eval", "--config", str(fixtures / "case" / "config.yaml"), "--query-id", "9",
                 "--report", str(fixtures / "case" / "report.txt")]) == 1


def test_backend_failure_exit_2(fixtures, tmp_path):
    (tmp_path / "script.json").write_text("{}")
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(f"dataset: {fixtures / 'case' / 'dataset.json'}\nbackends:\n  default: {{kind: mock, script: script.json}}\n")
    assert main(["eval", "--config", str(cfg), "--query-id", "101", "--report", str(fixtures / "case" / "report.txt")]) == 2


def test_bench_and_report(fixtures, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["bench", "--config", str(fixtures / "bench" / "config_heuristic.yaml"), "--out", str(out), "--replicates", "1"]) == 0
    table = capsys.readouterr().out
    assert table.startswith("Model")
    for name in ("results.jsonl", "summary.json", "leaderboard.txt", "leaderboard.csv", "leaderboard.json", "final_scores.png", "reasoning_evidence.png"):
        assert (out / name).exists(), name
    assert (out / "leaderboard.txt").read_text() == table

    rep = tmp_path / "rep"
    assert main(["report", "--run", str(out), "--out", str(rep), "--format", "csv"]) == 0
    csv_out = capsys.readouterr().out
    assert csv_out == (out / "leaderboard.csv").read_text()
    assert (rep / "final_scores.png").stat().st_size > 0

    assert main(["report", "--run", str(out), "--format", "json", "--no-figures"]) == 0
    assert {r["model_id"] for r in json.loads(capsys.readouterr().out)} == {"acme-research", "beta-labs"}


def test_bench_missing_reports_exit_3(fixtures, tmp_path, capsys):
    reports = tmp_path / "reports"
    shutil.copytree(fixtures / "bench" / "reports", reports)
    (reports / "acme-research" / "8.txt").unlink()
    code = main(["bench", "--config", str(fixtures / "bench" / "config_heuristic.yaml"), "--reports", str(reports),
                 "--out", str(tmp_path / "run"), "--replicates", "1", "--no-figures"])
    assert code == 3
    assert "acme-research/8.txt" in capsys.readouterr().err
    assert main(["report", "--run", str(tmp_path / "run"), "--no-figures"]) == 3


def test_report_without_run(tmp_path):
    assert main(["report", "--run", str(tmp_path)]) == 1


def test_flags_override_config(fixtures, tmp_path):
    args = build_parser().parse_args(["bench", "--config", str(fixtures / "bench" / "config_mock.yaml"), "--replicates", "1",
                                      "--tau", "0.7", "--out", str(tmp_path)])
    cfg = load_config(args)
    assert cfg.replicates == 1 and cfg.tau == 0.7 and cfg.parallelism == 2
    assert cfg.output_dir == str(tmp_path.resolve())


def test_invalid_flag_value(fixtures):
    assert main(["bench", "--config", str(fixtures / "bench" / "config_mock.yaml"), "--tau", "3"]) == 1
