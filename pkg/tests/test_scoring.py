from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skilljudge.backends import MockBackend
from skilljudge.checklist import ChecklistItem, Claim
from skilljudge.errors import DanglingDependency, EmptyChecklist, SchemaError
from skilljudge.scoring import (
    ItemJudgment,
    ScoredItem,
    aggregate,
    count_tokens,
    evidence_score,
    final_scores,
    gate,
    judge_item,
    parse_judge_score,
    reasoning_score,
)
from skilljudge.verification import VerificationVerdict, VerifiedClaim, map_verdict


def item(i, w=10, deps=None, typ="reasoning"):
    return ChecklistItem(item_id=i, tier="L2", description=f"criterion {i}", weight=w, item_type=typ, depends_on=deps)


def judged(i, raw):
    return ItemJudgment(i, raw, raw)


def vclaim(cid, v, w=5):
    conf = round(v * 100)
    verdict = VerificationVerdict("yes", conf)
    return VerifiedClaim(Claim(cid, "evidence", f"claim {cid}", w), verdict, map_verdict(verdict))


class TestJudgeItem:
    def test_partial(self):
        be = MockBackend({"judge::largest markets": {"score": 0.5, "rationale": "partly"}})
        it = ChecklistItem(9, "ReportSpecific", "Verify whether the claim that US, Canada, and UK are the largest markets is supported.", 10, item_type="reasoning", depends_on=(1,))
        j = judge_item("q", "r", it, [vclaim(1, 0.9)], be, "report")
        assert j.raw_score == 0.5 and j.conditioned_on == (1,)
        assert j.rationale == "partly"

    def test_out_of_range_after_repair(self):
        be = MockBackend({"judge::": "0.7", "repair:judge::": "0.7"})
        with pytest.raises(SchemaError):
            judge_item("q", "r", item(0), None, be)

    def test_repaired(self):
        be = MockBackend({"repair:judge::": "1", "judge::": "yes!"})
        assert judge_item("q", "r", item(0), None, be).raw_score == 1

    def test_unconditioned(self):
        be = MockBackend({"judge::": {"score": 1}})
        assert judge_item("q", "r", item(0), None, be).conditioned_on == ()

    def test_verdicts_in_prompt(self):
        be = MockBackend({"verdict: yes (confidence 90)": {"score": 1}})
        judge_item("q", "r", item(0, deps=(3,)), [vclaim(3, 0.9)], be)

    def test_flaw_items_are_flagged_in_prompt(self):
        be = MockBackend({"judge::Critical-flaw check": {"score": 1}})
        assert judge_item("q", "r", item(0, w=-15), None, be).raw_score == 1

    def test_missing_dependency(self):
        with pytest.raises(DanglingDependency):
            judge_item("q", "r", item(0, deps=(4,)), [], MockBackend({}))

    @pytest.mark.parametrize("raw, score", [("1", 1.0), ("0.5", 0.5), ('{"score": 0}', 0.0), ("Score:\n{\"score\": 1, \"rationale\": \"ok\"}", 1.0)])
    def test_parse(self, raw, score):
        assert parse_judge_score(raw)[0] == score

    @pytest.mark.parametrize("raw", ["0.7", "true", '{"rationale": "x"}', '{"score": "1"}', "2"])
    def test_parse_rejects(self, raw):
        with pytest.raises(SchemaError):
            parse_judge_score(raw)


class TestGate:
    def test_refuted_premise_gates(self):
        g = gate(judged(12, 1.0), item(12, deps=(5,)), [vclaim(5, 0.0)], 0.5)
        assert g.gated and g.gated_score == 0.0 and g.raw_score == 1.0

    def test_all_supported(self):
        g = gate(judged(1, 1.0), item(1, deps=(0, 1)), [vclaim(0, 1.0), vclaim(1, 1.0)])
        assert not g.gated and g.gated_score == 1.0

    def test_no_deps_passthrough(self):
        assert gate(judged(1, 0.5), item(1), []).gated_score == 0.5

    def test_threshold_is_strict(self):
        assert not gate(judged(1, 1.0), item(1, deps=(0,)), [vclaim(0, 0.5)], 0.5).gated

    def test_dangling(self):
        with pytest.raises(DanglingDependency):
            gate(judged(1, 1.0), item(1, deps=(7,)), [vclaim(0, 1.0)])

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.sampled_from([0, 0.5, 1]), st.floats(0, 1))
    def test_idempotent_and_sound(self, vs, raw, tau):
        claims = [vclaim(i, v) for i, v in enumerate(vs)]
        it = item(0, deps=tuple(range(len(vs))))
        once = gate(judged(0, raw), it, claims, tau)
        assert gate(once, it, claims, tau) == once
        assert once.gated == any(c.v_score < tau for c in claims)


class TestReasoningScore:
    def test_examples(self):
        items = [item(0, 15), item(1, 10), item(2, 5), item(3, -15)]
        assert reasoning_score([judged(i, s) for i, s in enumerate([1, 1, 0.5, 0])], items) == pytest.approx(27.5 / 45)
        assert reasoning_score([judged(i, s) for i, s in enumerate([1, 1, 0.5, 1])], items) == pytest.approx(12.5 / 45)
        assert reasoning_score([judged(i, 1) for i in range(3)], items[:3]) == 1.0

    def test_clamped_at_zero(self):
        assert reasoning_score([judged(0, 0), judged(1, 1)], [item(0, 5), item(1, -15)]) == 0.0

    def test_empty(self):
        with pytest.raises(EmptyChecklist):
            reasoning_score([], [])

    def test_misaligned(self):
        with pytest.raises(ValueError):
            reasoning_score([judged(1, 1)], [item(0)])

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.sampled_from([5, 10, 15, -15]), st.sampled_from([0, 0.5, 1])), min_size=1, max_size=12), st.data())
    def test_flipping_positive_gated_item_never_lowers(self, spec, data):
        items = [item(i, w) for i, (w, _) in enumerate(spec)]
        base = [ItemJudgment(i, s, 0.0, True) for i, (_, s) in enumerate(spec)]
        k = data.draw(st.integers(0, len(spec) - 1))
        if spec[k][0] < 0:
            return
        flipped = list(base)
        flipped[k] = ItemJudgment(k, spec[k][1], spec[k][1], False)
        assert reasoning_score(flipped, items) >= reasoning_score(base, items)

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.sampled_from([5, 10, 15, -15]), st.sampled_from([0, 0.5, 1])), min_size=1, max_size=12))
    def test_normalization_bound(self, spec):
        pos = sum(w for w, _ in spec if w > 0)
        neg = sum(-w for w, _ in spec if w < 0)
        total = pos + neg
        raw = sum(w * s for w, s in spec) / total
        assert -neg / total <= raw <= pos / total
        s = reasoning_score([judged(i, sc) for i, (_, sc) in enumerate(spec)], [item(i, w) for i, (w, _) in enumerate(spec)])
        assert s == min(1.0, max(0.0, raw))


class TestEvidenceAndFinal:
    def test_evidence_examples(self):
        assert evidence_score([vclaim(0, 1.0), vclaim(1, 0.0)]) == 0.5
        assert evidence_score([vclaim(0, 1.0), vclaim(1, 1.0)]) == 1.0
        assert evidence_score([]) == 1.0

    def test_weighted(self):
        assert evidence_score([vclaim(0, 1.0, 15), vclaim(1, 0.0, 5)]) == 0.75

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.data())
    def test_monotone_in_v(self, vs, data):
        k = data.draw(st.integers(0, len(vs) - 1))
        bump = data.draw(st.floats(vs[k], 1))
        lower = evidence_score([vclaim(i, v) for i, v in enumerate(vs)])
        higher = evidence_score([vclaim(i, bump if i == k else v) for i, v in enumerate(vs)])
        assert higher >= lower - 1e-15

    def test_density_rows(self):
        assert final_scores(0.571, 1.0, 7590)[1] == pytest.approx(0.0639, abs=1e-4)
        assert final_scores(0.562, 1.0, 4772)[1] == pytest.approx(0.0663, abs=1e-4)

    def test_zero_tokens(self):
        assert final_scores(0.5, 0.5, 0) == (0.25, 0.0)

    def test_annihilation(self):
        assert final_scores(0.0, 0.9, 10)[0] == 0.0

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 10**6))
    def test_score_algebra(self, r, e, t):
        s, u = final_scores(r, e, t)
        assert s <= min(r, e) + 1e-15
        assert (s == 0) == (r == 0 or e == 0) or s < 1e-300
        if t:
            assert u == s / math.log(t + 1)

    def test_negative_tokens(self):
        with pytest.raises(ValueError):
            final_scores(0.5, 0.5, -1)


class TestTokens:
    @pytest.mark.parametrize("text, n", [("a b  c", 3), ("", 0), ("one\ttwo\nthree ", 3)])
    def test_whitespace(self, text, n):
        assert count_tokens(text) == n

    def test_known_fixture_word_count(self, fixtures):
        text = (fixtures / "case" / "report.txt").read_text()
        oracle = sum(1 for line in text.splitlines() for w in line.split(" ") if w.strip())
        assert count_tokens(text) == oracle

    def test_pluggable(self):
        assert count_tokens("Hello, world!", "word_punct") == 4
        assert count_tokens("abcdef", lambda s: len(s) // 2) == 3


def test_aggregate_matches_components():
    items = [item(0, 15), item(1, 10, deps=(0,)), item(2, -15)]
    scored = [ScoredItem(items[0], judged(0, 1)), ScoredItem(items[1], judged(1, 1)), ScoredItem(items[2], judged(2, 0))]
    claims = [vclaim(0, 0.2)]
    sc = aggregate(scored, claims, 100, 0.5)
    assert [j.gated for j in sc.judgments] == [False, True, False]
    assert sc.s_reason == 15 / 40
    assert sc.s_evid == pytest.approx(0.2)
    assert sc.s_final == sc.s_reason * sc.s_evid
    assert not sc.no_evidence
    assert aggregate(scored[:1], [], 0).no_evidence
