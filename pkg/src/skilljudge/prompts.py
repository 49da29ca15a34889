"""Prompt templates: loading, rendering, hashing and kind detection."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources

from .taxonomy import ComposedRubric

TEMPLATE_VERSION = "1"

_MARKERS = (
    ("query_checklist", "# TASK\nGenerate a checklist to evaluate"),
    ("report_checklist", "# TASK\nGenerate a checklist to verify factual claims"),
    ("verify", "You are an expert fact-checker."),
    ("judge", "# TASK\nJudge whether the AI response"),
)
_SUBJECT_BOUNDS = {
    "query_checklist": ("# QUERY\n", "\n\n# CORE DELIVERABLE (L1 Gate)\n"),
    "report_checklist": ("# RESPONSE TO EVALUATE\n", "\n\n# ITEM TYPES\n"),
    "verify": ("## Claim to Verify\n", "\n\n## Source URL\n"),
    "judge": ("# CRITERION\n", "\n\n# VERIFICATION RESULTS\n"),
}
REPAIR_MARKER = "\n# REPAIR\n"


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return resources.files("skilljudge.data").joinpath("templates", f"{name}.txt").read_text("utf-8")


def digest(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def render_query_prompt(query: str, rubric: ComposedRubric) -> str:
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    return template("query_checklist").format(
        query=query,
        deliverable_check=rubric.deliverable_check,
        expert_hints=rubric.expert_hints,
    )


def render_report_prompt(query: str, report: str) -> str:
    return template("report_checklist").format(query=query, report_content=report)


def render_verify_prompt(
    claim: str,
    current_date: str,
    source_url: str | None,
    tool_results: str,
    remaining: int,
) -> str:
    source_info = f"## Source URL\n{source_url}" if source_url else "## Source URL\n(none provided)"
    base = template("verify").format(current_date=current_date, claim=claim, source_info=source_info)
    return base + template("verify_tools").format(tool_results=tool_results or "(none yet)", remaining=remaining)


def render_judge_prompt(query: str, report: str, criterion: str, verdicts: str) -> str:
    return template("judge").format(
        query=query,
        report_content=report,
        criterion=criterion,
        verdicts=verdicts or "(none)",
    )


def render_repair(prompt: str, violation: str) -> str:
    return prompt + template("repair").format(violation=violation)


def _between(prompt: str, start: str, end: str) -> str:
    i = prompt.find(start)
    if i < 0:
        return ""
    i += len(start)
    j = prompt.find(end, i)
    return prompt[i : j if j >= 0 else len(prompt)].strip()


def classify_prompt(prompt: str) -> tuple[str, str]:
    """Return (kind, subject). Repair prompts get kind ``repair:<base kind>``."""
    base = prompt.split(REPAIR_MARKER, 1)[0]
    kind = "unknown"
    for name, marker in _MARKERS:
        if base.startswith(marker):
            kind = name
            break
    subject = _between(base, *_SUBJECT_BOUNDS[kind]) if kind in _SUBJECT_BOUNDS else base
    if REPAIR_MARKER in prompt:
        kind = f"repair:{kind}"
    return kind, subject
