"""Per-item judging, dependency gating and the aggregate scores."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

from . import jsonio
from .backends import LLMBackend
from .checklist import ChecklistItem
from .errors import DanglingDependency, EmptyChecklist, SchemaError
from .prompts import render_judge_prompt
from .verification import SourceCredibility, VerifiedClaim

ALLOWED_SCORES = (0, 0.5, 1)
DEFAULT_TAU = 0.5


@dataclass(frozen=True)
class ItemJudgment:
    item_id: int
    raw_score: float
    gated_score: float
    gated: bool = False
    rationale: str = ""
    conditioned_on: tuple[int, ...] = ()
    checklist: str = "query"  # which checklist the item belongs to

    def to_dict(self) -> dict[str, Any]:
        return {
            "checklist": self.checklist,
            "item_id": self.item_id,
            "raw_score": jsonio.number(self.raw_score),
            "gated_score": jsonio.number(self.gated_score),
            "gated": self.gated,
            "rationale": self.rationale,
            "conditioned_on": list(self.conditioned_on),
        }


# -- judging -------------------------------------------------------------------


def parse_judge_score(raw: str) -> tuple[float, str]:
    """Accepts ``{"score": s, "rationale": "..."}`` or a bare number."""
    text = (raw or "").strip()
    try:
        obj: Any = float(text)
    except ValueError:
        obj = jsonio.extract_json(text)
    rationale = ""
    loc = "$"
    if isinstance(obj, dict):
        if "score" not in obj:
            raise SchemaError("missing score", "$.score")
        rationale = obj.get("rationale") or ""
        if not isinstance(rationale, str):
            raise SchemaError("rationale must be a string", "$.rationale")
        obj, loc = obj["score"], "$.score"
    if isinstance(obj, bool) or not isinstance(obj, (int, float)) or obj not in ALLOWED_SCORES:
        raise SchemaError(f"score must be one of 0, 0.5, 1 (got {obj!r})", loc)
    return float(obj), rationale


def _by_id(claims: Mapping[int, VerifiedClaim] | Iterable[VerifiedClaim]) -> dict[int, VerifiedClaim]:
    if isinstance(claims, Mapping):
        return dict(claims)
    return {vc.claim.claim_id: vc for vc in claims}


def verdict_digest(deps: Sequence[int], claims: Mapping[int, VerifiedClaim]) -> str:
    if not deps:
        return "(none: this criterion does not depend on verified claims)"
    lines = []
    for cid in deps:
        vc = claims[cid]
        v = vc.verdict
        lines.append(f"- claim {cid}: {vc.claim.text}\n  verdict: {v.conclusion} (confidence {v.confidence}), V={vc.v_score:.2f}")
        if v.summary:
            lines.append(f"  summary: {v.summary}")
    return "\n".join(lines)


def judge_item(
    query: str,
    report: str,
    item: ChecklistItem,
    context: Mapping[int, VerifiedClaim] | Iterable[VerifiedClaim] | None,
    backend: LLMBackend,
    checklist: str = "query",
) -> ItemJudgment:
    """Raw judgment of one criterion; verdicts of its evidence dependencies are shown to the judge."""
    if item.item_type == "evidence" and checklist == "report":
        raise ValueError(f"report item {item.item_id} is an evidence item; it is scored by verification")
    deps = tuple(item.depends_on or ())
    claims = _by_id(context or {})
    for cid in deps:
        if cid not in claims:
            raise DanglingDependency(item.item_id, cid)
    criterion = item.description
    if item.weight < 0:
        criterion += "\n(Critical-flaw check: answer 1 if the flaw IS present, 0 if absent.)"
    prompt = render_judge_prompt(query, report, criterion, verdict_digest(deps, claims))
    (score, rationale), _, _ = jsonio.call_with_repair(backend.complete, prompt, parse_judge_score)
    return ItemJudgment(item.item_id, score, score, False, rationale, deps, checklist)


# -- gating and aggregation ----------------------------------------------------


def gate(
    judgment: ItemJudgment,
    item: ChecklistItem,
    claims: Mapping[int, VerifiedClaim] | Iterable[VerifiedClaim],
    tau: float = DEFAULT_TAU,
) -> ItemJudgment:
    """Zero the item iff some claim it depends on verifies below ``tau``. Pure and idempotent."""
    by_id = _by_id(claims)
    failed = False
    for cid in item.depends_on or ():
        if cid not in by_id:
            raise DanglingDependency(item.item_id, cid)
        failed = failed or by_id[cid].v_score < tau
    if failed:
        return replace(judgment, gated_score=0.0, gated=True)
    return replace(judgment, gated_score=judgment.raw_score, gated=False)


def reasoning_score(judgments: Sequence[ItemJudgment], items: Sequence[ChecklistItem]) -> float:
    """Σ w·gated / Σ|w| clamped to [0, 1]; judgments and items are aligned positionally."""
    if len(judgments) != len(items):
        raise ValueError("judgments and items must align")
    num = 0.0
    den = 0.0
    for j, it in zip(judgments, items):
        if j.item_id != it.item_id:
            raise ValueError(f"judgment {j.item_id} is not aligned with item {it.item_id}")
        num += it.weight * j.gated_score
        den += abs(it.weight)
    if den == 0:
        raise EmptyChecklist()
    return min(1.0, max(0.0, num / den))


def evidence_score(claims: Sequence[VerifiedClaim]) -> float:
    """Claim-weight-weighted mean of V(c); an empty claim set scores 1.0."""
    if not claims:
        return 1.0
    num = 0.0
    den = 0.0
    for vc in claims:
        w = abs(vc.claim.weight)
        num += w * vc.v_score
        den += w
    return num / den


def final_scores(s_reason: float, s_evid: float, token_count: int) -> tuple[float, float]:
    if token_count < 0:
        raise ValueError("token_count must be >= 0")
    s_final = s_reason * s_evid
    u = s_final / math.log(token_count + 1) if token_count > 0 else 0.0
    return s_final, u


# -- tokenizers ----------------------------------------------------------------

_WORDPIECE = re.compile(r"\w+|[^\w\s]")

TOKENIZERS: dict[str, Callable[[str], int]] = {
    "whitespace": lambda s: len(s.split()),
    "word_punct": lambda s: len(_WORDPIECE.findall(s)),
}


def count_tokens(report: str, tokenizer: str | Callable[[str], int] = "whitespace") -> int:
    fn = TOKENIZERS[tokenizer] if isinstance(tokenizer, str) else tokenizer
    return int(fn(report or ""))


# -- combined result -----------------------------------------------------------


@dataclass(frozen=True)
class ScoredItem:
    item: ChecklistItem
    judgment: ItemJudgment


@dataclass(frozen=True)
class Scores:
    judgments: tuple[ItemJudgment, ...]
    s_reason: float
    s_evid: float
    s_final: float
    u_density: float
    no_evidence: bool


def aggregate(
    scored: Sequence[ScoredItem],
    verified: Sequence[VerifiedClaim],
    token_count: int,
    tau: float = DEFAULT_TAU,
) -> Scores:
    """Gate every judged item, then fold into S_reason, S_evid, S and U."""
    gated = tuple(gate(s.judgment, s.item, verified, tau) for s in scored)
    s_reason = reasoning_score(gated, [s.item for s in scored])
    s_evid = evidence_score(verified)
    s_final, u = final_scores(s_reason, s_evid, token_count)
    return Scores(gated, s_reason, s_evid, s_final, u, not verified)


@dataclass
class EvaluationResult:
    query_id: int
    model_id: str
    replicate: int
    run_id: str
    item_judgments: list[ItemJudgment]
    verified_claims: list[VerifiedClaim]
    s_reason: float
    s_evid: float
    s_final: float
    u_density: float
    credibility: SourceCredibility
    token_count: int
    tokenizer: str = "whitespace"
    tau: float = DEFAULT_TAU
    no_evidence: bool = False
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "model_id": self.model_id,
            "replicate": self.replicate,
            "run_id": self.run_id,
            "s_reason": self.s_reason,
            "s_evid": self.s_evid,
            "s_final": self.s_final,
            "u_density": self.u_density,
            "token_count": self.token_count,
            "tokenizer": self.tokenizer,
            "tau": self.tau,
            "no_evidence": self.no_evidence,
            "flags": list(self.flags),
            "credibility": self.credibility.to_dict(),
            "item_judgments": [j.to_dict() for j in self.item_judgments],
            "verified_claims": [vc.to_dict() for vc in self.verified_claims],
        }
