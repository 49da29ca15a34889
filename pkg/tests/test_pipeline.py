from __future__ import annotations

import json
import shutil

import pytest

from skilljudge.backends import MockBackend, MockTools
from skilljudge.errors import BackendError, EmptyReport, ParseError, SchemaError, UnknownLabel
from skilljudge.pipeline import (
    Backends,
    BenchQuery,
    Context,
    RunConfig,
    evaluate,
    format_csv,
    format_table,
    ingest,
    leaderboard,
    load_reports,
    read_results,
    run_replicates,
    write_tables,
)


class TestIngest:
    def test_fixture(self, fixtures):
        qs = ingest(fixtures / "dataset.json")
        assert [q.id for q in qs] == [8, 16, 27, 43]
        assert qs[1].l3 == ()
        assert qs[0].labels()[0].level == "L1"

    def test_duplicate_id(self, tmp_path, fixtures):
        doc = json.loads((fixtures / "dataset.json").read_text())
        doc[1]["id"] = doc[0]["id"]
        p = tmp_path / "d.json"
        p.write_text(json.dumps(doc, indent=2))
        with pytest.raises(ParseError, match="duplicate-id"):
            ingest(p)

    def test_misspelled_label_located(self, tmp_path, fixtures):
        doc = json.loads((fixtures / "dataset.json").read_text())
        doc[2]["L1_primary_intent"] = "supplier_sourcingg"
        p = tmp_path / "d.json"
        p.write_text(json.dumps(doc, indent=2))
        with pytest.raises(UnknownLabel) as e:
            ingest(p)
        assert "supplier_sourcingg" in str(e.value)
        assert "$[2].L1_primary_intent" in e.value.location and "line" in e.value.location

    @pytest.mark.parametrize("text", ["{}", "[1]", '[{"id": "x"}]', "[{", '[{"id": 1, "query": "", "L1_primary_intent": "x"}]'])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "d.json"
        p.write_text(text)
        with pytest.raises(ParseError):
            ingest(p)


class TestRunConfig:
    @pytest.mark.parametrize(
        "kw, loc",
        [
            ({"replicates": 0}, "$.replicates"),
            ({"tau": 1.5}, "$.tau"),
            ({"tokenizer": "bpe"}, "$.tokenizer"),
            ({"tool_budget": 0}, "$.tool_budget"),
            ({"parallelism": 0}, "$.parallelism"),
            ({"backends": {"default": {"kind": "gpt"}}}, "$.backends.default.kind"),
            ({"backends": {"default": {"kind": "mock", "script": "/nope.json"}}}, "$.backends.default.script"),
            ({"dataset": "/nope.json"}, "$.dataset"),
        ],
    )
    def test_invalid(self, kw, loc):
        with pytest.raises(ParseError) as e:
            RunConfig(**kw)
        assert e.value.location == loc

    def test_unknown_key(self):
        with pytest.raises(ParseError, match="unknown config key"):
            RunConfig.from_dict({"replicate": 3})

    def test_paths_relative_to_config(self, fixtures):
        cfg = RunConfig.load(fixtures / "bench" / "config_mock.yaml")
        assert cfg.dataset == str(fixtures / "bench" / "../dataset.json")
        assert cfg.offline

    def test_frozen_clock_offline_only(self):
        cfg = RunConfig(current_date="2026-01-17")
        assert cfg.make_clock()() == "2026-01-17T00:00:00Z"
        http = RunConfig(backends={"default": {"kind": "http", "base_url": "https://x", "model_name": "m"}})
        assert not http.offline
        assert http.make_clock()().endswith("Z")
        assert RunConfig(current_date="2026-01-17", clock="wall").make_clock()() != "2026-01-17T00:00:00Z"


@pytest.fixture
def case(fixtures):
    cfg = RunConfig.load(fixtures / "case" / "config.yaml")
    q = ingest(cfg.dataset)[0]
    report = (fixtures / "case" / "report.txt").read_text("utf-8")
    return cfg, q, report


class TestEvaluate:
    def test_empty_report_before_any_backend_call(self, case):
        cfg, q, _ = case
        be = MockBackend({})
        ctx = Context.build(cfg, Backends(be, be, be, MockTools({})))
        with pytest.raises(EmptyReport) as e:
            evaluate(q, "   \n", ctx)
        assert e.value.stage == "input" and be.calls == []

    def test_stage_annotation(self, case):
        cfg, q, report = case
        be = MockBackend({})
        ctx = Context.build(cfg, Backends(be, be, be, MockTools({})))
        with pytest.raises(BackendError) as e:
            evaluate(q, report, ctx)
        assert e.value.stage == "query_checklist"

    def test_schema_error_in_judge_stage(self, case):
        cfg, q, report = case
        judge = MockBackend({"judge::": "0.7", "repair:judge::": "0.7"})
        ctx = Context.build(cfg)
        ctx.backends.judge = judge
        with pytest.raises(SchemaError) as e:
            evaluate(q, report, ctx)
        assert e.value.stage == "judge"

    def test_verification_failure_is_isolated(self, case):
        cfg, q, report = case
        ctx = Context.build(cfg)
        ctx.backends.verify = MockBackend({})
        res = evaluate(q, report, ctx)
        assert res.verified_claims and all(vc.failure == "BackendError" for vc in res.verified_claims)
        assert all(vc.v_score == 0.0 for vc in res.verified_claims)
        assert "verification_failures" in res.flags
        assert res.s_evid == 0.0 and res.s_final == 0.0

    def test_records_and_memo(self, case):
        cfg, q, report = case
        ctx = Context.build(cfg)
        sink: list = []
        evaluate(q, report, ctx, sink=sink)
        evaluate(q, report, ctx, replicate=1, sink=sink)
        types = [r["type"] for r in sink]
        assert types.count("query_checklist") == 1
        assert types.count("report_checklist") == 2 and types.count("result") == 2
        assert all({"query_id", "model_id", "replicate"} <= set(r) for r in sink)

    def test_result_schema(self, case):
        cfg, q, report = case
        d = evaluate(q, report, Context.build(cfg), model_id="m").to_dict()
        for key in ("s_reason", "s_evid", "s_final", "u_density", "credibility", "item_judgments", "verified_claims", "token_count"):
            assert key in d
        json.dumps(d)


def _result(model, rep, qid, final, reason=0.5, evid=0.5, q=0.5, u=0.01, tokens=100):
    return {"model_id": model, "replicate": rep, "query_id": qid, "s_final": final, "s_reason": reason, "s_evid": evid,
            "credibility": {"q_score": q}, "u_density": u, "token_count": tokens}


class TestLeaderboard:
    def test_replicate_mean_and_spread(self):
        rows = leaderboard([_result("m", r, 1, f) for r, f in enumerate([0.50, 0.52, 0.54])])
        row = rows[0]
        assert round(100 * row.final, 1) == 52.0
        assert 100 * row.std_final == pytest.approx(1.633, abs=1e-3)
        assert row.to_dict()["two_sigma_pct"] == pytest.approx(3.27, abs=0.01)

    def test_average_over_queries_then_replicates(self):
        res = [_result("m", 0, 1, 0.2), _result("m", 0, 2, 0.4), _result("m", 1, 1, 0.6), _result("m", 1, 2, 0.8)]
        row = leaderboard(res)[0]
        assert row.replicate_finals == pytest.approx([0.3, 0.7])
        assert row.final == pytest.approx(0.5)
        assert row.n_queries == 2

    def test_ordering(self):
        rows = leaderboard([_result("low", 0, 1, 0.4), _result("high", 0, 1, 0.6)])
        assert [r.model_id for r in rows] == ["high", "low"]

    def test_formats(self, tmp_path):
        rows = leaderboard([_result("low", 0, 1, 0.4), _result("high", 0, 1, 0.6)])
        table = format_table(rows)
        assert table.splitlines()[0].startswith("Model") and "60.0" in table
        csv_lines = format_csv(rows).splitlines()
        assert csv_lines[1].startswith("high,60.0,")
        paths = write_tables(rows, tmp_path)
        names = {p.name for p in paths}
        assert {"leaderboard.txt", "leaderboard.csv", "leaderboard.json", "final_scores.png", "reasoning_evidence.png"} <= names
        assert all(p.stat().st_size > 0 for p in paths)
        assert (tmp_path / "final_scores.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestBench:
    def test_missing_reports_are_reported(self, tmp_path, fixtures):
        reports = tmp_path / "reports"
        shutil.copytree(fixtures / "bench" / "reports", reports)
        (reports / "beta-labs" / "27.txt").unlink()
        cfg = RunConfig.load(fixtures / "bench" / "config_heuristic.yaml")
        cfg.replicates = 1
        queries = ingest(cfg.dataset)
        run = run_replicates(queries, load_reports(reports, queries), cfg)
        assert [(m.model_id, m.query_id) for m in run.missing] == [("beta-labs", 27)]
        beta = next(r for r in run.rows if r.model_id == "beta-labs")
        assert beta.n_queries == 3

    def test_resume_after_interruption(self, tmp_path, fixtures):
        cfg = RunConfig.load(fixtures / "bench" / "config_mock.yaml")
        queries = ingest(cfg.dataset)
        reports = load_reports(cfg.reports_dir, queries)
        full = run_replicates(queries, reports, cfg, out_dir=tmp_path / "full")

        part = tmp_path / "part"
        run_replicates(queries, reports, cfg, out_dir=part)
        lines = (part / "results.jsonl").read_text().splitlines()
        # cut mid-run, leaving a truncated trailing line and orphan stage records
        cut = len(lines) // 2
        (part / "results.jsonl").write_text("\n".join(lines[:cut]) + "\n" + lines[cut][: len(lines[cut]) // 2])
        resumed = run_replicates(queries, reports, cfg, out_dir=part)

        assert resumed.run_id == full.run_id
        assert format_table(resumed.rows) == format_table(full.rows)
        assert len(read_results(part)) == len(read_results(tmp_path / "full"))
        summary = json.loads((part / "summary.json").read_text())
        assert summary["run_id"] == full.run_id

    def test_rerun_of_complete_run_calls_no_backend(self, tmp_path, fixtures):
        cfg = RunConfig.load(fixtures / "bench" / "config_mock.yaml")
        queries = ingest(cfg.dataset)
        reports = load_reports(cfg.reports_dir, queries)
        first = run_replicates(queries, reports, cfg, out_dir=tmp_path)
        silent = MockBackend({})
        again = run_replicates(queries, reports, cfg, backends=Backends(silent, silent, silent, MockTools({})), out_dir=tmp_path)
        assert silent.calls == []
        assert format_table(again.rows) == format_table(first.rows)

    def test_run_id_changes_with_config(self, fixtures):
        cfg = RunConfig.load(fixtures / "bench" / "config_heuristic.yaml")
        queries = ingest(cfg.dataset)
        reports = load_reports(cfg.reports_dir, queries)
        from skilljudge.pipeline import compute_run_id

        a = compute_run_id(cfg, queries, reports)
        cfg.tau = 0.6
        assert compute_run_id(cfg, queries, reports) != a


def test_bench_query_round_trip():
    q = BenchQuery(1, "q", "market_research", ("platform_data",), ())
    assert q.to_dict()["L3_constraints"] == []
