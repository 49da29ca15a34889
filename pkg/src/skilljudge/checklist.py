"""Query- and report-level checklist generation, parsing and validation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

from . import jsonio
from .backends import LLMBackend
from .errors import SchemaError
from .prompts import TEMPLATE_VERSION, digest, render_query_prompt, render_report_prompt
from .taxonomy import ComposedRubric

QUERY_TIERS = ("L1", "L2", "L3", "General")
TIERS = QUERY_TIERS + ("ReportSpecific",)
ITEM_TYPES = ("evidence", "reasoning")
DEFAULT_WEIGHTS = frozenset({5, 10, 15, -15})

_PRONOUNS = {"it", "its", "this", "that", "these", "those", "they", "them", "their", "he", "she", "his", "her"}
_LEAD_VERB = re.compile(r"^(verify|check|confirm|assess|evaluate)\s+(that|whether|if)?\s*", re.I)
_URL = re.compile(r"https?://[^\s)\]>\"',]+")


@dataclass(frozen=True)
class ChecklistPolicy:
    query_bounds: tuple[int, int] = (4, 15)
    report_bounds: tuple[int, int] = (4, 10)
    # None disables the weight admissibility check.
    allowed_weights: frozenset[float] | None = DEFAULT_WEIGHTS


DEFAULT_POLICY = ChecklistPolicy()


@dataclass(frozen=True)
class ChecklistItem:
    item_id: int
    tier: str
    description: str
    weight: float
    category: str = ""
    source_skill: str = ""
    item_type: str = "reasoning"
    depends_on: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Checklist:
    kind: str  # "query" | "report"
    items: tuple[ChecklistItem, ...]

    def item(self, item_id: int) -> ChecklistItem:
        return self.items[item_id]


@dataclass(frozen=True)
class Claim:
    claim_id: int
    kind: str  # "evidence" | "reasoning"
    text: str
    weight: float
    source_url: str | None = None


@dataclass
class GenerationRecord:
    kind: str
    prompt_inputs: dict[str, str]
    prompt_hash: str
    raw_response: str
    parsed: list[dict[str, Any]]
    backend_id: str
    timestamp: str
    repaired: bool = False
    template_version: str = TEMPLATE_VERSION
    extra: dict[str, Any] = field(default_factory=dict)

    def recompute_hash(self) -> str:
        p = self.prompt_inputs
        if self.kind == "query_checklist":
            r = ComposedRubric(p["deliverable_check"], p["expert_hints"])
            return digest(render_query_prompt(p["query"], r))
        return digest(render_report_prompt(p["query"], p["report"]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "template_version": self.template_version,
            "prompt_inputs": self.prompt_inputs,
            "prompt_hash": self.prompt_hash,
            "raw_response": self.raw_response,
            "parsed": self.parsed,
            "backend_id": self.backend_id,
            "timestamp": self.timestamp,
            "repaired": self.repaired,
        }


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# -- parsing -----------------------------------------------------------------


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int_id(x: Any, loc: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < 0:
        raise SchemaError("expected a non-negative integer", loc)
    return x


def _depends(x: Any, loc: str) -> tuple[int, ...] | None:
    if x is None:
        return None
    if not isinstance(x, list):
        raise SchemaError("depends_on must be null or a list of claim ids", loc)
    return tuple(_int_id(v, f"{loc}[{i}]") for i, v in enumerate(x))


def _items_array(doc: Any) -> list[Any]:
    if isinstance(doc, dict) and isinstance(doc.get("items"), list):
        doc = doc["items"]
    if not isinstance(doc, list):
        raise SchemaError("expected a JSON array of checklist items", "$")
    return doc


def _check_common(obj: Any, loc: str, policy: ChecklistPolicy) -> tuple[int, str, float, str]:
    if not isinstance(obj, dict):
        raise SchemaError("item must be an object", loc)
    item_id = _int_id(obj.get("item_id"), f"{loc}.item_id")
    desc = obj.get("description")
    if not isinstance(desc, str) or not desc.strip():
        raise SchemaError("description must be a non-empty string", f"{loc}.description")
    w = obj.get("weight")
    if not _is_number(w) or w == 0:
        raise SchemaError("weight must be a non-zero number", f"{loc}.weight")
    if policy.allowed_weights is not None and w not in policy.allowed_weights:
        raise SchemaError(f"weight {w} not in {sorted(policy.allowed_weights)}", f"{loc}.weight")
    cat = obj.get("category", "")
    if cat is None:
        cat = ""
    if not isinstance(cat, str):
        raise SchemaError("category must be a string", f"{loc}.category")
    return item_id, desc.strip(), w, cat


def _check_ids_and_count(items: list[ChecklistItem], bounds: tuple[int, int], kind: str) -> list[ChecklistItem]:
    ids = [it.item_id for it in items]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"duplicate item_id in {ids}", "$")
    if sorted(ids) != list(range(len(ids))):
        raise SchemaError(f"item_ids {sorted(ids)} are not contiguous from 0", "$")
    lo, hi = bounds
    if not lo <= len(items) <= hi:
        raise SchemaError(f"{kind} checklist has {len(items)} items, expected {lo}-{hi}", "$")
    return sorted(items, key=lambda it: it.item_id)


def parse_query_checklist(raw: str | list, policy: ChecklistPolicy = DEFAULT_POLICY) -> Checklist:
    doc = _items_array(jsonio.extract_json(raw) if isinstance(raw, str) else raw)
    items = []
    for i, obj in enumerate(doc):
        loc = f"$[{i}]"
        item_id, desc, w, cat = _check_common(obj, loc, policy)
        tier = obj.get("tier")
        canon = {t.lower(): t for t in QUERY_TIERS}
        if not isinstance(tier, str) or tier.lower() not in canon:
            raise SchemaError(f"tier must be one of {QUERY_TIERS}", f"{loc}.tier")
        skill = obj.get("source_skill", "")
        if skill is None:
            skill = ""
        if not isinstance(skill, str):
            raise SchemaError("source_skill must be a string", f"{loc}.source_skill")
        items.append(
            ChecklistItem(
                item_id=item_id,
                tier=canon[tier.lower()],
                description=desc,
                weight=w,
                category=cat,
                source_skill=skill,
                item_type="reasoning",
                depends_on=_depends(obj.get("depends_on"), f"{loc}.depends_on"),
            )
        )
    items = _check_ids_and_count(items, policy.query_bounds, "query")
    if items[0].tier != "L1":
        raise SchemaError("item 0 must be the L1 core-deliverable gate", "$[item_id=0].tier")
    return Checklist("query", tuple(items))


def _self_contained(text: str) -> bool:
    body = _LEAD_VERB.sub("", text.strip(), count=1)
    low = body.lower()
    if low.startswith("the above"):
        return False
    first = re.split(r"[\s,.;:'’]+", low, maxsplit=1)[0]
    return first not in _PRONOUNS


def parse_report_checklist(raw: str | list, policy: ChecklistPolicy = DEFAULT_POLICY) -> Checklist:
    doc = _items_array(jsonio.extract_json(raw) if isinstance(raw, str) else raw)
    items = []
    for i, obj in enumerate(doc):
        loc = f"$[{i}]"
        item_id, desc, w, cat = _check_common(obj, loc, policy)
        typ = obj.get("type")
        if typ not in ITEM_TYPES:
            raise SchemaError(f"type must be one of {ITEM_TYPES}", f"{loc}.type")
        deps = _depends(obj.get("depends_on"), f"{loc}.depends_on")
        if typ == "evidence" and deps:
            raise SchemaError("evidence items cannot carry depends_on", f"{loc}.depends_on")
        if not _self_contained(desc):
            raise SchemaError("description is not self-contained (starts with a dangling referent)", f"{loc}.description")
        items.append(
            ChecklistItem(
                item_id=item_id,
                tier="ReportSpecific",
                description=desc,
                weight=w,
                category=cat,
                source_skill="report",
                item_type=typ,
                depends_on=deps,
            )
        )
    items = _check_ids_and_count(items, policy.report_bounds, "report")
    evidence_ids = {it.item_id for it in items if it.item_type == "evidence"}
    for it in items:
        for dep in it.depends_on or ():
            if dep not in evidence_ids:
                raise SchemaError(f"depends_on references {dep}, which is not an evidence claim", f"$[item_id={it.item_id}].depends_on")
    return Checklist("report", tuple(items))


def serialize_item(item: ChecklistItem, kind: str) -> dict[str, Any]:
    deps = list(item.depends_on) if item.depends_on is not None else None
    if kind == "query":
        return {
            "item_id": item.item_id,
            "tier": item.tier,
            "depends_on": deps,
            "category": item.category,
            "description": item.description,
            "weight": jsonio.number(item.weight),
            "source_skill": item.source_skill,
        }
    out: dict[str, Any] = {"item_id": item.item_id, "type": item.item_type}
    if deps is not None:
        out["depends_on"] = deps
    out.update(category=item.category, description=item.description, weight=jsonio.number(item.weight))
    return out


def serialize_checklist(cl: Checklist) -> list[dict[str, Any]]:
    return [serialize_item(it, cl.kind) for it in cl.items]


def claims_from_checklist(cl: Checklist) -> list[Claim]:
    """Report items map 1:1 onto claims; claim_id equals item_id."""
    out = []
    for it in cl.items:
        m = _URL.search(it.description)
        out.append(
            Claim(
                claim_id=it.item_id,
                kind=it.item_type,
                text=it.description,
                weight=it.weight,
                source_url=m.group(0).rstrip(".") if m else None,
            )
        )
    return out


def claim_to_dict(c: Claim) -> dict[str, Any]:
    return {
        "claim_id": c.claim_id,
        "kind": c.kind,
        "text": c.text,
        "source_url": c.source_url,
        "weight": jsonio.number(c.weight),
    }


# -- generation --------------------------------------------------------------


def generate_query_checklist(
    query: str,
    rubric: ComposedRubric,
    backend: LLMBackend,
    policy: ChecklistPolicy = DEFAULT_POLICY,
    clock: Callable[[], str] = utc_now,
) -> tuple[Checklist, GenerationRecord]:
    prompt = render_query_prompt(query, rubric)
    checklist, raw, repaired = jsonio.call_with_repair(
        backend.complete, prompt, lambda r: parse_query_checklist(r, policy)
    )
    record = GenerationRecord(
        kind="query_checklist",
        prompt_inputs={"query": query, "deliverable_check": rubric.deliverable_check, "expert_hints": rubric.expert_hints},
        prompt_hash=digest(prompt),
        raw_response=raw,
        parsed=serialize_checklist(checklist),
        backend_id=backend.backend_id,
        timestamp=clock(),
        repaired=repaired,
    )
    return checklist, record


def generate_report_checklist(
    query: str,
    report: str,
    backend: LLMBackend,
    policy: ChecklistPolicy = DEFAULT_POLICY,
    clock: Callable[[], str] = utc_now,
) -> tuple[Checklist, list[Claim], GenerationRecord]:
    if not report or not report.strip():
        raise ValueError("report must be non-empty")
    prompt = render_report_prompt(query, report)
    checklist, raw, repaired = jsonio.call_with_repair(
        backend.complete, prompt, lambda r: parse_report_checklist(r, policy)
    )
    record = GenerationRecord(
        kind="report_checklist",
        prompt_inputs={"query": query, "report": report},
        prompt_hash=digest(prompt),
        raw_response=raw,
        parsed=serialize_checklist(checklist),
        backend_id=backend.backend_id,
        timestamp=clock(),
        repaired=repaired,
    )
    return checklist, claims_from_checklist(checklist), record
