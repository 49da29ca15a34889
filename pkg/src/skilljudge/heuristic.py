"""Deterministic offline backend that answers every prompt kind with lexical heuristics.

It is not a judge of quality. It exists so the CLI and benchmark harness can run
end to end without network access or a hand-written mock script.
"""

from __future__ import annotations

import re
from typing import Any

from . import jsonio
from .prompts import REPAIR_MARKER, _between, classify_prompt
from .taxonomy import NO_DELIVERABLE

_STOP = frozenset(
    "that this with from have will which their there about into than they them were been "
    "does should would could your what when where while also must more most such each only "
    "over other some very just verify whether report response query".split()
)
_WORD = re.compile(r"[a-z0-9][a-z0-9\-]{3,}")
_NUM = re.compile(r"\d+(?:[.,]\d+)*")
_SENT = re.compile(r"(?<=[.!?])\s+|\n+")
_URL = re.compile(r"https?://\S+")
_REASONING_CUE = re.compile(r"\b(recommend|should|because|therefore|suggest|best|ideal|consider)\b", re.I)
_QUOTED = re.compile(r'"(.+)"', re.S)
_RESULT_HEAD = re.compile(r"^\[\d+\] (search|url_context) ")


def content_words(text: str) -> set[str]:
    return {w for w in _WORD.findall(text.lower()) if w not in _STOP}


def overlap(needle: str, haystack: str) -> float:
    words = content_words(needle)
    if not words:
        return 0.0
    hay = haystack.lower()
    return sum(1 for w in words if w in hay) / len(words)


def _first_line(text: str) -> str:
    line = text.strip().splitlines()[0] if text.strip() else ""
    return re.sub(r"^\[[^\]]*\]\s*", "", line).strip()


class HeuristicBackend:
    def __init__(self, backend_id: str = "heuristic"):
        self.backend_id = backend_id

    def complete(self, prompt: str) -> str:
        base = prompt.split(REPAIR_MARKER, 1)[0]
        kind, subject = classify_prompt(base)
        handler = {
            "query_checklist": self._query_checklist,
            "report_checklist": self._report_checklist,
            "verify": self._verify,
            "judge": self._judge,
        }.get(kind)
        if handler is None:
            return jsonio.dumps({"error": "unrecognized prompt"})
        return jsonio.dumps(handler(base, subject))

    # query-level ---------------------------------------------------------------

    def _query_checklist(self, prompt: str, query: str) -> list[dict[str, Any]]:
        deliverable = _between(prompt, "# CORE DELIVERABLE (L1 Gate)\n", "\n\n# EXPERT CHECKPOINTS\n")
        hints = _between(prompt, "# EXPERT CHECKPOINTS\n", "\n\n# RULES\n")
        if deliverable and deliverable != NO_DELIVERABLE:
            skill = re.match(r"\[([^\]]*)\]", deliverable)
            head = ("Does the response deliver: " + _first_line(deliverable) + "?", skill.group(1) if skill else "")
        else:
            head = ("Does the response directly answer the query?", "")
        rules: list[tuple[str, str, str]] = []
        flaws: list[tuple[str, str, str]] = []
        level, name = "General", ""
        for line in hints.splitlines():
            m = re.match(r"## \[(L[123])\] (.+)", line)
            if m:
                level, name = m.group(1), m.group(2).strip()
            elif line.startswith("  - FLAW: "):
                flaws.append((level, name, line[len("  - FLAW: ") :].strip()))
            elif line.startswith("- ") and not line.startswith("- Critical flaws"):
                rules.append((level, name, line[2:].strip()))
        general = [
            ("General", "", "Is the response organized so the key findings are easy to locate?"),
            ("General", "", "Does the response avoid unsupported or speculative statements?"),
        ]
        flaws = flaws[:3]
        rules = rules[: 15 - 1 - len(flaws) - len(general)]
        items = [{"tier": "L1", "category": "Core Deliverable", "description": head[0], "weight": 15, "source_skill": head[1]}]
        items += [{"tier": t, "category": "Expert Checkpoint", "description": f"Does the response follow: {r}?", "weight": 10, "source_skill": s} for t, s, r in rules]
        items += [{"tier": t, "category": "Critical Flaw", "description": f"Does the response commit this flaw: {f}?", "weight": -15, "source_skill": s} for t, s, f in flaws]
        items += [{"tier": t, "category": "Independent", "description": d, "weight": 5, "source_skill": s} for t, s, d in general]
        return [{"item_id": i, "tier": it["tier"], "depends_on": None, "category": it["category"], "description": it["description"], "weight": it["weight"], "source_skill": it["source_skill"]} for i, it in enumerate(items)]

    # report-level --------------------------------------------------------------

    def _report_checklist(self, prompt: str, report: str) -> list[dict[str, Any]]:
        sentences = [s.strip(" -*#\t") for s in _SENT.split(report)]
        sentences = [s for s in sentences if len(s.split()) >= 4]
        items: list[dict[str, Any]] = []
        last_evidence: int | None = None
        for s in sentences:
            if len(items) >= 10:
                break
            quoted = s.replace('"', "'")
            if (_NUM.search(s) or _URL.search(s)) and sum(it["type"] == "evidence" for it in items) < 6:
                last_evidence = len(items)
                items.append({"item_id": len(items), "type": "evidence", "category": "Factual Claim", "description": f'Verify the report statement "{quoted}"', "weight": 10})
            elif _REASONING_CUE.search(s):
                it = {"item_id": len(items), "type": "reasoning", "category": "Recommendation", "description": f'Assess whether the recommendation "{quoted}" is justified', "weight": 10}
                if last_evidence is not None:
                    it["depends_on"] = [last_evidence]
                items.append(it)
        fillers = [
            "Assess whether the report states its assumptions explicitly",
            "Assess whether the report addresses every part of the query",
            "Assess whether the report's conclusions follow from its evidence",
            "Assess whether the report gives actionable next steps",
        ]
        for f in fillers:
            if len(items) >= 4:
                break
            items.append({"item_id": len(items), "type": "reasoning", "category": "Coverage", "description": f, "weight": 5})
        return items

    # verification and judging ----------------------------------------------------

    def _verify(self, prompt: str, claim: str) -> dict[str, Any]:
        m = _QUOTED.search(claim)
        target = m.group(1) if m else claim
        gathered = _between(prompt, "## Tool Results\n", "\n\n## Tool Requests\n")
        # Header lines echo the tool input (often the claim itself), so only outputs count.
        evidence = "\n".join(ln for ln in gathered.splitlines() if not _RESULT_HEAD.match(ln))
        ov = overlap(target, evidence)
        numbers_ok = all(n in evidence for n in _NUM.findall(target))
        yes = ov >= 0.6 and numbers_ok
        c = round(ov * 100)
        return {
            "conclusion": "yes" if yes else "no",
            "confidence": c if yes else 100 - c,
            "reason": {
                "summary": f"{round(ov * 100)}% of the claim's content words appear in the gathered evidence",
                "supporting": [],
                "contradicting": [] if numbers_ok else ["figures in the claim were not found in the evidence"],
            },
            "reference_urls": {"supporting": [], "contradicting": []},
        }

    def _judge(self, prompt: str, criterion: str) -> dict[str, Any]:
        if "Critical-flaw check" in criterion:
            return {"score": 0, "rationale": "no lexical evidence of the flaw"}
        report = _between(prompt, "# RESPONSE TO EVALUATE\n", "\n\n# CRITERION\n")
        ov = overlap(criterion, report)
        score = 1 if ov >= 0.4 else 0.5 if ov >= 0.15 else 0
        return {"score": score, "rationale": f"criterion term overlap {ov:.2f}"}
