"""Claim verification agent, verdict wire format, and citation-source credibility."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence
from urllib.parse import urlparse

from . import jsonio
from .backends import LLMBackend, ToolCall, ToolSession, ToolSuite
from .checklist import Claim, claim_to_dict
from .errors import InvalidUrl, SchemaError, ToolBudgetExceeded, ToolError
from .prompts import render_verify_prompt

TIER_SCORES = {"T1": 1.0, "T2": 0.75, "T3": 0.5, "T4": 0.25}
DEFAULT_BUDGET = 5

_URL = re.compile(r"https?://[^\s)\]>\"'<,]+")
_HOST = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?(\.[a-z0-9]([a-z0-9-]*[a-z0-9])?)*$")
_LEAD_VERB = re.compile(r"^(verify|check|confirm)\s+(that|whether|if)?\s*", re.I)


@dataclass(frozen=True)
class VerificationVerdict:
    conclusion: str  # "yes" | "no"
    confidence: int
    summary: str = ""
    supporting: tuple[str, ...] = ()
    contradicting: tuple[str, ...] = ()
    supporting_urls: tuple[str, ...] = ()
    contradicting_urls: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "conclusion": self.conclusion,
            "confidence": self.confidence,
            "reason": {
                "summary": self.summary,
                "supporting": list(self.supporting),
                "contradicting": list(self.contradicting),
            },
            "reference_urls": {
                "supporting": list(self.supporting_urls),
                "contradicting": list(self.contradicting_urls),
            },
        }


@dataclass
class VerifiedClaim:
    claim: Claim
    verdict: VerificationVerdict
    v_score: float
    tool_trace: list[ToolCall] = field(default_factory=list)
    failure: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d = {
            "claim": claim_to_dict(self.claim),
            "verdict": self.verdict.to_dict(),
            "v_score": self.v_score,
            "tool_trace": [t.to_dict() for t in self.tool_trace],
        }
        if self.failure:
            d["failure"] = self.failure
        return d


def _str_list(obj: Any, loc: str) -> tuple[str, ...]:
    if not isinstance(obj, list):
        raise SchemaError("expected a list", loc)
    for i, x in enumerate(obj):
        if not isinstance(x, str):
            raise SchemaError("expected a string", f"{loc}[{i}]")
    return tuple(obj)


def verdict_from_obj(obj: Any) -> VerificationVerdict:
    if not isinstance(obj, dict):
        raise SchemaError("verdict must be a JSON object", "$")
    conclusion = obj.get("conclusion")
    if conclusion is None:
        raise SchemaError("missing conclusion", "$.conclusion")
    if not isinstance(conclusion, str) or conclusion.strip().lower() not in ("yes", "no"):
        raise SchemaError('conclusion must be "yes" or "no"', "$.conclusion")
    conf = obj.get("confidence")
    if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not float(conf).is_integer():
        raise SchemaError("confidence must be an integer", "$.confidence")
    if not 0 <= conf <= 100:
        raise SchemaError("confidence must lie in 0..100", "$.confidence")
    reason = obj.get("reason")
    if not isinstance(reason, dict):
        raise SchemaError("reason must be an object", "$.reason")
    summary = reason.get("summary", "")
    if not isinstance(summary, str):
        raise SchemaError("summary must be a string", "$.reason.summary")
    refs = obj.get("reference_urls")
    if not isinstance(refs, dict):
        raise SchemaError("reference_urls must be an object", "$.reference_urls")
    return VerificationVerdict(
        conclusion=conclusion.strip().lower(),
        confidence=int(conf),
        summary=summary,
        supporting=_str_list(reason.get("supporting"), "$.reason.supporting"),
        contradicting=_str_list(reason.get("contradicting"), "$.reason.contradicting"),
        supporting_urls=_str_list(refs.get("supporting"), "$.reference_urls.supporting"),
        contradicting_urls=_str_list(refs.get("contradicting"), "$.reference_urls.contradicting"),
    )


def parse_verdict(raw: str) -> VerificationVerdict:
    return verdict_from_obj(jsonio.extract_json(raw))


def map_verdict(verdict: VerificationVerdict) -> float:
    """yes -> confidence/100; no -> 1 - confidence/100."""
    c = verdict.confidence
    return c / 100 if verdict.conclusion == "yes" else (100 - c) / 100


def floor_verdict(reason: str) -> VerificationVerdict:
    # Confidence 100 on "no" keeps the mapped score at the 0.0 failure floor.
    return VerificationVerdict("no", 100, summary=f"cannot be verified: {reason}")


# -- verification agent --------------------------------------------------------


def search_query_for(claim_text: str) -> str:
    return _LEAD_VERB.sub("", claim_text.strip(), count=1).rstrip(" .")


def _format_gathered(gathered: list[tuple[str, str, str | None, Any]]) -> str:
    blocks = []
    for n, (tool, arg, err, out) in enumerate(gathered, 1):
        head = f"[{n}] {tool} {json.dumps(arg, ensure_ascii=False)}"
        if err:
            blocks.append(f"{head} -> ERROR {err}")
        elif tool == "search":
            lines = [f"- {r['title']} | {r['url']} | {r['snippet']}".replace(" |  | ", " | ") for r in out]
            blocks.append(head + "\n" + ("\n".join(lines) if lines else "(no results)"))
        else:
            blocks.append(f"{head}\n{out[:4000]}")
    return "\n\n".join(blocks)


def _parse_agent_reply(raw: str) -> tuple[str, Any]:
    obj = jsonio.extract_json(raw)
    if isinstance(obj, dict) and "tool" in obj and "conclusion" not in obj:
        if obj["tool"] not in ("search", "url_context"):
            raise SchemaError('tool must be "search" or "url_context"', "$.tool")
        if not isinstance(obj.get("input"), str) or not obj["input"].strip():
            raise SchemaError("tool input must be a non-empty string", "$.input")
        return "tool", (obj["tool"], obj["input"])
    return "verdict", verdict_from_obj(obj)


def verify_claim(
    claim: Claim,
    tools: ToolSuite,
    current_date: str,
    backend: LLMBackend,
    budget: int = DEFAULT_BUDGET,
) -> VerifiedClaim:
    """Ground an evidence claim with tools, then ask the agent backend for a JSON verdict.

    A cited source URL is always read before any search. Tool errors consume
    budget; when the budget runs out the claim takes the failure-floor verdict.
    """
    if claim.kind != "evidence":
        raise ValueError(f"claim {claim.claim_id} is a {claim.kind} claim; only evidence claims are verified")
    session = ToolSession(tools, budget)
    gathered: list[tuple[str, str, str | None, Any]] = []

    def run(tool: str, arg: str) -> bool:
        try:
            out = session.url_context(arg) if tool == "url_context" else session.search(arg)
        except ToolError as e:
            gathered.append((tool, arg, e.kind, None))
            return False
        gathered.append((tool, arg, None, out))
        return True

    try:
        have = run("url_context", claim.source_url) if claim.source_url else False
        query = search_query_for(claim.text)
        while not run("search", query) and not have:
            pass
        while True:
            prompt = render_verify_prompt(claim.text, current_date, claim.source_url, _format_gathered(gathered), session.remaining)
            (what, payload), _, _ = jsonio.call_with_repair(backend.complete, prompt, _parse_agent_reply)
            if what == "verdict":
                verdict = payload
                break
            run(*payload)
    except ToolBudgetExceeded as e:
        verdict = floor_verdict(str(e))
        return VerifiedClaim(claim, verdict, map_verdict(verdict), session.trace, failure="tool_budget_exceeded")
    return VerifiedClaim(claim, verdict, map_verdict(verdict), session.trace)


# -- source credibility --------------------------------------------------------


@dataclass(frozen=True)
class TierTable:
    entries: tuple[tuple[str, str], ...]

    @classmethod
    def from_obj(cls, obj: Iterable[dict[str, str]]) -> "TierTable":
        entries = []
        for i, e in enumerate(obj):
            suffix = str(e.get("domain_suffix", "")).lower().strip(".")
            tier = e.get("tier")
            if not suffix or tier not in TIER_SCORES:
                raise ValueError(f"tier table entry {i} needs a domain_suffix and a tier in {list(TIER_SCORES)}")
            entries.append((suffix, tier))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path: str | Path) -> "TierTable":
        return cls.from_obj(json.loads(Path(path).read_text("utf-8")))


def default_tier_table() -> TierTable:
    return TierTable.from_obj(json.loads(resources.files("skilljudge.data").joinpath("tier_table.json").read_text("utf-8")))


def _host(url: str) -> str:
    try:
        parsed = urlparse(url.strip())
        host = (parsed.hostname or "").rstrip(".")
    except ValueError:
        raise InvalidUrl(url) from None
    if parsed.scheme not in ("http", "https") or not host or not _HOST.match(host):
        raise InvalidUrl(url)
    return host


def classify_source(url: str, tier_table: TierTable) -> tuple[str, float]:
    """Longest label-suffix match against the tier table; unmatched hosts are T4."""
    labels = _host(url).split(".")
    best: tuple[int, str] | None = None
    for suffix, tier in tier_table.entries:
        s = suffix.split(".")
        if len(s) <= len(labels) and labels[-len(s) :] == s and (best is None or len(s) > best[0]):
            best = (len(s), tier)
    tier = best[1] if best else "T4"
    return tier, TIER_SCORES[tier]


@dataclass(frozen=True)
class GradeThresholds:
    a: float = 0.75
    b: float = 0.60
    c: float = 0.45
    d: float = 0.30


@dataclass(frozen=True)
class SourceCredibility:
    per_url: tuple[tuple[str, str, float], ...]
    q_score: float
    grade: str
    recommendations: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_url": [{"url": u, "tier": t, "s_tier": s} for u, t, s in self.per_url],
            "q_score": self.q_score,
            "grade": self.grade,
            "recommendations": list(self.recommendations),
        }


def positional_quality(scores: Sequence[float]) -> float:
    """Tier scores averaged with weights 1, 1/2, 1/3, ... in exact rational arithmetic."""
    if not scores:
        return 0.0
    num = sum((Fraction(s) * Fraction(1, i) for i, s in enumerate(scores, 1)), Fraction(0))
    den = sum((Fraction(1, i) for i in range(1, len(scores) + 1)), Fraction(0))
    return float(num / den)


def grade_for(q: float, tiers: Sequence[str], th: GradeThresholds = GradeThresholds()) -> str:
    if not tiers or all(t == "T4" for t in tiers) or q < th.d:
        return "F"
    if q >= th.a and "T1" in tiers:
        return "A"
    if q >= th.b:
        return "B"
    if q >= th.c:
        return "C"
    return "D"


def score_sources(urls: Sequence[str], tier_table: TierTable, thresholds: GradeThresholds = GradeThresholds()) -> SourceCredibility:
    per_url = tuple((u, *classify_source(u, tier_table)) for u in urls)
    tiers = [t for _, t, _ in per_url]
    q = positional_quality([s for _, _, s in per_url])
    grade = grade_for(q, tiers, thresholds)
    recs: list[str] = []
    if grade in ("C", "D", "F"):
        if not per_url:
            recs.append("No sources cited: add verifiable references for key claims.")
        if "T1" not in tiers:
            recs.append("Add government (.gov), academic (.edu) or first-party platform documentation as primary evidence.")
        if per_url and tiers[0] != "T1":
            recs.append("Lead with the most authoritative source; the first citation carries the most weight.")
        if tiers and tiers.count("T4") * 2 > len(tiers):
            recs.append("Replace unrecognized or user-generated sources with authoritative data providers.")
    return SourceCredibility(per_url, q, grade, tuple(recs))


def extract_urls(text: str) -> list[str]:
    """URLs in order of first appearance, duplicates dropped, trailing punctuation trimmed."""
    seen: dict[str, None] = {}
    for m in _URL.finditer(text):
        u = m.group(0).rstrip(".;:!?")
        try:
            _host(u)
        except InvalidUrl:
            continue
        seen.setdefault(u, None)
    return list(seen)
