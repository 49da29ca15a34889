"""Two-layer checklist judging of deep-research reports with verified evidence and dependency gating."""

from .backends import HTTPChatBackend, MockBackend, MockScript, MockTools
from .checklist import Checklist, ChecklistItem, Claim, parse_query_checklist, parse_report_checklist
from .heuristic import HeuristicBackend
from .pipeline import BenchQuery, RunConfig, evaluate, ingest, run_replicates
from .scoring import EvaluationResult, ItemJudgment, evidence_score, final_scores, gate, reasoning_score
from .taxonomy import activate_skills, compose_rubric, default_skill_library, load_skill_library
from .verification import VerificationVerdict, classify_source, map_verdict, score_sources, verify_claim

__version__ = "0.1.0"

__all__ = [
    "BenchQuery",
    "Checklist",
    "ChecklistItem",
    "Claim",
    "EvaluationResult",
    "HTTPChatBackend",
    "HeuristicBackend",
    "ItemJudgment",
    "MockBackend",
    "MockScript",
    "MockTools",
    "RunConfig",
    "VerificationVerdict",
    "activate_skills",
    "classify_source",
    "compose_rubric",
    "default_skill_library",
    "evaluate",
    "evidence_score",
    "final_scores",
    "gate",
    "ingest",
    "load_skill_library",
    "map_verdict",
    "parse_query_checklist",
    "parse_report_checklist",
    "reasoning_score",
    "run_replicates",
    "score_sources",
    "verify_claim",
]
