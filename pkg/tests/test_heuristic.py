from __future__ import annotations

import json

from skilljudge.checklist import generate_query_checklist, generate_report_checklist
from skilljudge.heuristic import HeuristicBackend, overlap
from skilljudge.pipeline import ingest
from skilljudge.taxonomy import activate_skills, compose_rubric, default_skill_library
from skilljudge.verification import parse_verdict

FROZEN = lambda: "2026-01-17T00:00:00Z"  # noqa: E731


def test_query_checklists_are_valid_for_every_fixture_query(fixtures):
    be = HeuristicBackend()
    lib = default_skill_library()
    for q in ingest(fixtures / "dataset.json"):
        rubric = compose_rubric(activate_skills(q.labels(), lib))
        a, rec = generate_query_checklist(q.query, rubric, be, clock=FROZEN)
        b, _ = generate_query_checklist(q.query, rubric, be, clock=FROZEN)
        assert a == b and not rec.repaired
        assert a.items[0].tier == "L1"


def test_report_checklists_are_valid(fixtures):
    be = HeuristicBackend()
    queries = {q.id: q for q in ingest(fixtures / "dataset.json")}
    for path in sorted((fixtures / "bench" / "reports").glob("*/*.txt")):
        cl, claims, rec = generate_report_checklist(queries[int(path.stem)].query, path.read_text(), be, clock=FROZEN)
        assert 4 <= len(cl.items) <= 10 and not rec.repaired
        assert [c.claim_id for c in claims] == [it.item_id for it in cl.items]


def test_verify_reads_only_tool_output():
    be = HeuristicBackend()
    from skilljudge.prompts import render_verify_prompt

    claim = 'Verify the report statement "Cashmere coats sell for 999 CAD on Etsy"'
    echo_only = render_verify_prompt(claim, "2026-01-17", None, '[1] search "cashmere coats sell 999 CAD etsy"\n', 4)
    assert parse_verdict(be.complete(echo_only)).conclusion == "no"
    backed = render_verify_prompt(claim, "2026-01-17", None, '[1] search "x"\ncashmere coats sell for 999 CAD on Etsy\n', 4)
    assert parse_verdict(be.complete(backed)).conclusion == "yes"


def test_unrecognized_prompt():
    assert json.loads(HeuristicBackend().complete("hello")) == {"error": "unrecognized prompt"}


def test_overlap_bounds():
    assert overlap("alpha bravo", "alpha bravo charlie") == 1.0
    assert overlap("alpha bravo", "delta") == 0.0
