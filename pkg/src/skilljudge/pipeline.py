"""Dataset ingest, run configuration, per-report evaluation, replicate runs and leaderboards."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

import yaml

from . import jsonio
from .backends import EndpointConfig, HttpTools, HTTPChatBackend, LLMBackend, MockBackend, MockScript, MockTools, ToolSuite
from .checklist import (
    Checklist,
    ChecklistPolicy,
    DEFAULT_WEIGHTS,
    GenerationRecord,
    claims_from_checklist,
    generate_query_checklist,
    generate_report_checklist,
    parse_query_checklist,
    utc_now,
)
from .errors import EmptyReport, JudgeError, ParseError, UnknownLabel
from .heuristic import HeuristicBackend
from .prompts import digest
from .scoring import DEFAULT_TAU, TOKENIZERS, EvaluationResult, ScoredItem, aggregate, count_tokens, judge_item
from .taxonomy import DEFAULT_TAXONOMY, SkillLibrary, Taxonomy, TaxonomyLabel, activate_skills, compose_rubric, default_skill_library, load_skill_library
from .verification import (
    DEFAULT_BUDGET,
    TierTable,
    VerifiedClaim,
    default_tier_table,
    extract_urls,
    floor_verdict,
    map_verdict,
    score_sources,
    verify_claim,
)

log = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"
SUMMARY_FILE = "summary.json"


# -- dataset -------------------------------------------------------------------


@dataclass(frozen=True)
class BenchQuery:
    id: int
    query: str
    l1: str
    l2: tuple[str, ...] = ()
    l3: tuple[str, ...] = ()

    def labels(self, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> list[TaxonomyLabel]:
        return [taxonomy.label("L1", self.l1)] + [taxonomy.label("L2", n) for n in self.l2] + [taxonomy.label("L3", n) for n in self.l3]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "query": self.query,
            "L1_primary_intent": self.l1,
            "L2_information_need": list(self.l2),
            "L3_constraints": list(self.l3),
        }


def _line_col(text: str, offset: int) -> str:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return f"line {line}, column {col}"


def _label_location(text: str, start: int, label: str, path: str) -> str:
    off = text.find(json.dumps(label), start)
    return f"{path} ({_line_col(text, off + 1)})" if off >= 0 else path


def ingest(source: str | Path, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> list[BenchQuery]:
    """Parse and validate a dataset file (a JSON array of labelled queries)."""
    text = Path(source).read_text("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, f"line {e.lineno}, column {e.colno}") from None
    if not isinstance(doc, list):
        raise ParseError("dataset must be a JSON array", "$")
    out: list[BenchQuery] = []
    seen: dict[int, int] = {}
    cursor = 0
    for i, rec in enumerate(doc):
        loc = f"$[{i}]"
        if not isinstance(rec, dict):
            raise ParseError("record must be an object", loc)
        qid = rec.get("id")
        if isinstance(qid, bool) or not isinstance(qid, int):
            raise ParseError("id must be an integer", f"{loc}.id")
        if qid in seen:
            raise ParseError(f"duplicate-id {qid} (first at $[{seen[qid]}])", f"{loc}.id")
        seen[qid] = i
        q = rec.get("query")
        if not isinstance(q, str) or not q.strip():
            raise ParseError("query must be a non-empty string", f"{loc}.query")
        l1 = rec.get("L1_primary_intent")
        if not isinstance(l1, str):
            raise ParseError("L1_primary_intent must be a string", f"{loc}.L1_primary_intent")
        lists = {}
        for key in ("L2_information_need", "L3_constraints"):
            v = rec.get(key)
            if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
                raise ParseError(f"{key} must be a list of strings", f"{loc}.{key}")
            lists[key] = tuple(v)
        id_off = text.find(f'"id": {qid}', cursor)
        if id_off < 0:
            id_off = cursor
        cursor = max(cursor, id_off)
        for level, key, names in (("L1", "L1_primary_intent", (l1,)), ("L2", "L2_information_need", lists["L2_information_need"]), ("L3", "L3_constraints", lists["L3_constraints"])):
            for j, name in enumerate(names):
                if not taxonomy.contains(TaxonomyLabel(level, name)):
                    path = f"{loc}.{key}" if level == "L1" else f"{loc}.{key}[{j}]"
                    raise UnknownLabel(name, _label_location(text, id_off, name, path))
        out.append(BenchQuery(qid, q, l1, lists["L2_information_need"], lists["L3_constraints"]))
    return out


# -- configuration -------------------------------------------------------------

_CONFIG_KEYS = {
    "replicates",
    "tau",
    "allowed_weights",
    "tokenizer",
    "backends",
    "tools",
    "tool_budget",
    "tier_table",
    "skill_library",
    "output_dir",
    "dataset",
    "reports_dir",
    "parallelism",
    "current_date",
    "clock",
}
_PATH_KEYS = ("tier_table", "skill_library", "dataset", "reports_dir")


@dataclass
class RunConfig:
    replicates: int = 3
    tau: float = DEFAULT_TAU
    allowed_weights: list[float] | None = field(default_factory=lambda: sorted(DEFAULT_WEIGHTS))
    tokenizer: str = "whitespace"
    # role -> backend spec; roles are checklist, verify, judge, with "default" as fallback
    backends: dict[str, dict[str, Any]] = field(default_factory=lambda: {"default": {"kind": "heuristic"}})
    tools: dict[str, Any] = field(default_factory=lambda: {"kind": "mock", "script": None})
    tool_budget: int = DEFAULT_BUDGET
    tier_table: str | None = None
    skill_library: str | None = None
    output_dir: str = "runs/latest"
    dataset: str | None = None
    reports_dir: str | None = None
    parallelism: int = 1
    current_date: str | None = None
    clock: str | None = None  # "wall" | "frozen"; None freezes timestamps when every backend is offline

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ParseError("replicates must be an integer >= 1", "$.replicates")
        if not 0 <= float(self.tau) <= 1:
            raise ParseError("tau must lie in [0, 1]", "$.tau")
        if self.tokenizer not in TOKENIZERS:
            raise ParseError(f"tokenizer must be one of {sorted(TOKENIZERS)}", "$.tokenizer")
        if not isinstance(self.tool_budget, int) or self.tool_budget < 1:
            raise ParseError("tool_budget must be an integer >= 1", "$.tool_budget")
        if not isinstance(self.parallelism, int) or self.parallelism < 1:
            raise ParseError("parallelism must be an integer >= 1", "$.parallelism")
        if self.clock not in (None, "wall", "frozen"):
            raise ParseError('clock must be "wall" or "frozen"', "$.clock")
        for role, spec in self.backends.items():
            if role not in ("default", "checklist", "verify", "judge"):
                raise ParseError(f"unknown backend role {role!r}", f"$.backends.{role}")
            if not isinstance(spec, dict) or spec.get("kind") not in ("http", "mock", "heuristic"):
                raise ParseError("kind must be http, mock or heuristic", f"$.backends.{role}.kind")
        if self.tools.get("kind") not in ("mock", "http"):
            raise ParseError("tools.kind must be mock or http", "$.tools.kind")
        for key in _PATH_KEYS:
            p = getattr(self, key)
            if p is not None and not Path(p).exists():
                raise ParseError(f"path does not exist: {p}", f"$.{key}")
        for role, spec in self.backends.items():
            if spec.get("kind") == "mock" and not (spec.get("script") and Path(spec["script"]).exists()):
                raise ParseError(f"mock script not found: {spec.get('script')}", f"$.backends.{role}.script")
        if self.tools.get("kind") == "mock" and self.tools.get("script") and not Path(self.tools["script"]).exists():
            raise ParseError(f"tool script not found: {self.tools['script']}", "$.tools.script")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base: Path | None = None) -> "RunConfig":
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ParseError(f"unknown config key(s) {sorted(unknown)}", "$")
        doc = json.loads(json.dumps(doc))

        def rel(p: Any) -> Any:
            if base is None or not isinstance(p, str):
                return p
            q = Path(p).expanduser()
            return str(q if q.is_absolute() else base / q)

        for key in _PATH_KEYS + ("output_dir",):
            if key in doc:
                doc[key] = rel(doc[key])
        for spec in (doc.get("backends") or {}).values():
            if isinstance(spec, dict) and "script" in spec:
                spec["script"] = rel(spec["script"])
        if isinstance(doc.get("tools"), dict) and "script" in doc["tools"]:
            doc["tools"]["script"] = rel(doc["tools"]["script"])
        if isinstance(doc.get("current_date"), date):
            doc["current_date"] = doc["current_date"].isoformat()
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text("utf-8")) or {}
        except yaml.YAMLError as e:
            raise ParseError(str(e), str(path)) from None
        if not isinstance(doc, dict):
            raise ParseError("config must be a mapping", "$")
        return cls.from_dict(doc, base=path.parent)

    def backend_spec(self, role: str) -> dict[str, Any]:
        return self.backends.get(role) or self.backends.get("default") or {"kind": "heuristic"}

    @property
    def offline(self) -> bool:
        roles = ("checklist", "verify", "judge")
        return all(self.backend_spec(r)["kind"] != "http" for r in roles) and self.tools.get("kind") == "mock"

    def policy(self) -> ChecklistPolicy:
        w = frozenset(self.allowed_weights) if self.allowed_weights is not None else None
        return ChecklistPolicy(allowed_weights=w)

    def resolved_date(self) -> str:
        return self.current_date or date.today().isoformat()

    def make_clock(self) -> Callable[[], str]:
        frozen = self.clock == "frozen" or (self.clock is None and self.offline)
        if frozen:
            stamp = f"{self.resolved_date()}T00:00:00Z"
            return lambda: stamp
        return utc_now

    def fingerprint(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("output_dir")
        return d


@dataclass
class Backends:
    checklist: LLMBackend
    verify: LLMBackend
    judge: LLMBackend
    tools: ToolSuite


def _make_backend(spec: Mapping[str, Any]) -> LLMBackend:
    kind = spec["kind"]
    if kind == "heuristic":
        return HeuristicBackend(spec.get("id", "heuristic"))
    if kind == "mock":
        return MockBackend(MockScript.load(spec["script"]), spec.get("id", "mock"))
    fields = {k: v for k, v in spec.items() if k in EndpointConfig.__dataclass_fields__}
    if "base_url" not in fields or "model_name" not in fields:
        raise ParseError("http backends need base_url and model_name", "$.backends")
    return HTTPChatBackend(EndpointConfig(**fields), backend_id=spec.get("id"))


def build_backends(cfg: RunConfig) -> Backends:
    made: dict[str, LLMBackend] = {}

    def get(role: str) -> LLMBackend:
        spec = cfg.backend_spec(role)
        key = jsonio.dumps(spec)
        if key not in made:
            made[key] = _make_backend(spec)
        return made[key]

    t = cfg.tools
    tools: ToolSuite
    if t["kind"] == "mock":
        tools = MockTools.load(t["script"]) if t.get("script") else MockTools({})
    else:
        tools = HttpTools(search_url=t.get("search_url"), api_key_env=t.get("api_key_env"), timeout=float(t.get("timeout", 30.0)))
    return Backends(get("checklist"), get("verify"), get("judge"), tools)


# -- evaluation ----------------------------------------------------------------


@contextmanager
def stage(name: str) -> Iterator[None]:
    try:
        yield
    except JudgeError as e:
        if e.stage is None:
            e.stage = name
        raise


@dataclass
class Context:
    """Resolved, shareable run state: libraries, backends and the query-checklist memo."""

    cfg: RunConfig
    backends: Backends
    skills: SkillLibrary
    tiers: TierTable
    taxonomy: Taxonomy = DEFAULT_TAXONOMY
    clock: Callable[[], str] = utc_now
    query_checklists: dict[str, tuple[Checklist, GenerationRecord]] = field(default_factory=dict)

    @classmethod
    def build(cls, cfg: RunConfig, backends: Backends | None = None) -> "Context":
        skills = load_skill_library(Path(cfg.skill_library).read_bytes()) if cfg.skill_library else default_skill_library()
        tiers = TierTable.load(cfg.tier_table) if cfg.tier_table else default_tier_table()
        return cls(cfg, backends or build_backends(cfg), skills, tiers, clock=cfg.make_clock())


def _checklist_key(query: str, rubric_hash: str) -> str:
    return digest(query + "\x00" + rubric_hash)


def _isolated_verify(claim, ctx: Context) -> VerifiedClaim:
    try:
        return verify_claim(claim, ctx.backends.tools, ctx.cfg.resolved_date(), ctx.backends.verify, ctx.cfg.tool_budget)
    except JudgeError as e:
        log.warning("verification of claim %d failed, scoring at the floor: %s", claim.claim_id, e)
        v = floor_verdict(f"verification failed ({type(e).__name__}: {e})")
        return VerifiedClaim(claim, v, map_verdict(v), [], failure=type(e).__name__)


def evaluate(
    query: BenchQuery,
    report: str,
    ctx: Context,
    *,
    model_id: str = "",
    replicate: int = 0,
    run_id: str = "",
    sink: list[dict[str, Any]] | None = None,
) -> EvaluationResult:
    """Run every stage on one (query, report) pair. Stage records are appended to ``sink``."""
    cfg = ctx.cfg
    records = sink if sink is not None else []
    tag = {"query_id": query.id, "model_id": model_id, "replicate": replicate}
    if not report or not report.strip():
        err = EmptyReport(f"report for query {query.id} is empty")
        err.stage = "input"
        raise err
    with stage("activate"):
        skills = activate_skills(query.labels(ctx.taxonomy), ctx.skills)
    with stage("compose"):
        rubric = compose_rubric(skills)
    with stage("query_checklist"):
        key = _checklist_key(query.query, digest(rubric.deliverable_check + "\x00" + rubric.expert_hints))
        if key not in ctx.query_checklists:
            ctx.query_checklists[key] = generate_query_checklist(query.query, rubric, ctx.backends.checklist, cfg.policy(), ctx.clock)
            records.append({"type": "query_checklist", "key": key, **tag, "record": ctx.query_checklists[key][1].to_dict()})
        q_checklist, _ = ctx.query_checklists[key]
    with stage("report_checklist"):
        r_checklist, claims, r_record = generate_report_checklist(query.query, report, ctx.backends.checklist, cfg.policy(), ctx.clock)
        records.append({"type": "report_checklist", **tag, "record": r_record.to_dict()})
    evidence = [c for c in claims if c.kind == "evidence"]
    with stage("verify"):
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            verified = list(pool.map(lambda c: _isolated_verify(c, ctx), evidence))
    for vc in verified:
        records.append({"type": "verification", **tag, "record": vc.to_dict()})
    by_id = {vc.claim.claim_id: vc for vc in verified}
    to_judge = [("query", it) for it in q_checklist.items] + [("report", it) for it in r_checklist.items if it.item_type == "reasoning"]
    with stage("judge"):
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            judgments = list(pool.map(lambda p: judge_item(query.query, report, p[1], by_id, ctx.backends.judge, p[0]), to_judge))
    with stage("score"):
        tokens = count_tokens(report, cfg.tokenizer)
        scores = aggregate([ScoredItem(it, j) for (_, it), j in zip(to_judge, judgments)], verified, tokens, cfg.tau)
        credibility = score_sources(extract_urls(report), ctx.tiers)
    flags = []
    if scores.no_evidence:
        flags.append("no_evidence")
    if any(vc.failure for vc in verified):
        flags.append("verification_failures")
    result = EvaluationResult(
        query_id=query.id,
        model_id=model_id,
        replicate=replicate,
        run_id=run_id,
        item_judgments=list(scores.judgments),
        verified_claims=verified,
        s_reason=scores.s_reason,
        s_evid=scores.s_evid,
        s_final=scores.s_final,
        u_density=scores.u_density,
        credibility=credibility,
        token_count=tokens,
        tokenizer=cfg.tokenizer,
        tau=cfg.tau,
        no_evidence=scores.no_evidence,
        flags=flags,
    )
    records.append({"type": "result", **tag, "record": result.to_dict()})
    return result


# -- replicate runs and leaderboard ---------------------------------------------


@dataclass(frozen=True)
class MissingReport:
    model_id: str
    query_id: int

    def to_dict(self) -> dict[str, Any]:
        return {"model_id": self.model_id, "query_id": self.query_id}


@dataclass
class LeaderboardRow:
    model_id: str
    final: float
    reasoning: float
    evidence: float
    credibility: float
    density: float
    tokens: float
    replicate_finals: list[float]
    std_final: float
    n_queries: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "final_pct": round(100 * self.final, 1),
            "reasoning_pct": round(100 * self.reasoning, 1),
            "evidence_pct": round(100 * self.evidence, 1),
            "credibility_pct": round(100 * self.credibility, 1),
            "density": round(self.density, 3),
            "tokens_judge_side": round(self.tokens, 1),
            "std_final_pct": round(100 * self.std_final, 2),
            "two_sigma_pct": round(200 * self.std_final, 2),
            "replicate_finals": self.replicate_finals,
            "n_queries": self.n_queries,
            "raw": {
                "final": self.final,
                "reasoning": self.reasoning,
                "evidence": self.evidence,
                "credibility": self.credibility,
                "density": self.density,
                "tokens": self.tokens,
                "std_final": self.std_final,
            },
        }


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def leaderboard(results: Sequence[Mapping[str, Any]]) -> list[LeaderboardRow]:
    """Per model: average each metric over queries within a replicate, then over replicates."""
    by_model: dict[str, dict[int, list[Mapping[str, Any]]]] = {}
    for r in results:
        by_model.setdefault(r["model_id"], {}).setdefault(r["replicate"], []).append(r)
    rows = []
    for model, reps in by_model.items():
        per_rep: dict[str, list[float]] = {k: [] for k in ("final", "reasoning", "evidence", "credibility", "density", "tokens")}
        for rep in sorted(reps):
            rs = reps[rep]
            per_rep["final"].append(_mean([r["s_final"] for r in rs]))
            per_rep["reasoning"].append(_mean([r["s_reason"] for r in rs]))
            per_rep["evidence"].append(_mean([r["s_evid"] for r in rs]))
            per_rep["credibility"].append(_mean([r["credibility"]["q_score"] for r in rs]))
            per_rep["density"].append(_mean([r["u_density"] for r in rs]))
            per_rep["tokens"].append(_mean([r["token_count"] for r in rs]))
        rows.append(
            LeaderboardRow(
                model_id=model,
                final=_mean(per_rep["final"]),
                reasoning=_mean(per_rep["reasoning"]),
                evidence=_mean(per_rep["evidence"]),
                credibility=_mean(per_rep["credibility"]),
                density=_mean(per_rep["density"]),
                tokens=_mean(per_rep["tokens"]),
                replicate_finals=per_rep["final"],
                std_final=statistics.pstdev(per_rep["final"]),
                n_queries=len({r["query_id"] for rs in reps.values() for r in rs}),
            )
        )
    rows.sort(key=lambda row: (-row.final, row.model_id))
    return rows


_COLUMNS = ("Model", "Final (%)", "±2σ", "Reasoning (%)", "Evidence (%)", "Credibility (%)", "Density", "Tokens (judge-side)")


def _cells(row: LeaderboardRow) -> list[str]:
    return [
        row.model_id,
        f"{100 * row.final:.1f}",
        f"{200 * row.std_final:.2f}",
        f"{100 * row.reasoning:.1f}",
        f"{100 * row.evidence:.1f}",
        f"{100 * row.credibility:.1f}",
        f"{row.density:.3f}",
        f"{row.tokens:.0f}",
    ]


def format_table(rows: Sequence[LeaderboardRow]) -> str:
    body = [list(_COLUMNS)] + [_cells(r) for r in rows]
    widths = [max(len(line[i]) for line in body) for i in range(len(_COLUMNS))]
    out = []
    for n, line in enumerate(body):
        out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths))).rstrip())
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def format_csv(rows: Sequence[LeaderboardRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    for r in rows:
        w.writerow(_cells(r))
    return buf.getvalue()


def load_reports(reports_dir: str | Path, queries: Sequence[BenchQuery]) -> dict[str, dict[int, str | None]]:
    """``<reports_dir>/<model_id>/<query_id>.txt``; absent files map to None."""
    root = Path(reports_dir)
    out: dict[str, dict[int, str | None]] = {}
    for model_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        out[model_dir.name] = {}
        for q in queries:
            f = model_dir / f"{q.id}.txt"
            out[model_dir.name][q.id] = f.read_text("utf-8") if f.exists() else None
    return out


def compute_run_id(cfg: RunConfig, queries: Sequence[BenchQuery], reports: Mapping[str, Mapping[int, str | None]]) -> str:
    payload = {
        "config": cfg.fingerprint(),
        "queries": [q.to_dict() for q in queries],
        "reports": {m: {str(k): (digest(v) if v is not None else None) for k, v in sorted(d.items())} for m, d in sorted(reports.items())},
    }
    return digest(jsonio.dumps(payload))[len("sha256:") :][:16]


@dataclass
class BenchRun:
    run_id: str
    rows: list[LeaderboardRow]
    missing: list[MissingReport]
    results: list[dict[str, Any]]
    out_dir: Path | None = None


def _read_records(path: Path) -> list[dict[str, Any]]:
    recs = []
    for line in path.read_text("utf-8").splitlines():
        try:
            recs.append(json.loads(line))
        except json.JSONDecodeError:
            log.warning("dropping truncated record in %s", path)
    return recs


def read_results(run_dir: str | Path) -> list[dict[str, Any]]:
    return [r["record"] for r in _read_records(Path(run_dir) / RESULTS_FILE) if r.get("type") == "result"]


def run_replicates(
    queries: Sequence[BenchQuery],
    reports: Mapping[str, Mapping[int, str | None]],
    cfg: RunConfig,
    backends: Backends | None = None,
    out_dir: str | Path | None = None,
) -> BenchRun:
    """Evaluate every (model, query, replicate) triple and build the leaderboard.

    With ``out_dir`` set, records stream to ``results.jsonl`` and triples already
    holding a result record are skipped, so an interrupted run can be resumed.
    """
    ctx = Context.build(cfg, backends)
    run_id = compute_run_id(cfg, queries, reports)
    missing = [MissingReport(m, q.id) for m in sorted(reports) for q in queries if not reports[m].get(q.id)]
    tasks = [(m, q, r) for m in sorted(reports) for q in queries if reports[m].get(q.id) for r in range(cfg.replicates)]

    done: dict[tuple[int, str, int], dict[str, Any]] = {}
    path = Path(out_dir) / RESULTS_FILE if out_dir else None
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.exists():
            kept = []
            for rec in _read_records(path):
                if rec.get("type") == "result" and rec["record"].get("run_id") == run_id:
                    done[(rec["query_id"], rec["model_id"], rec["replicate"])] = rec
            for rec in _read_records(path):
                if rec.get("type") == "query_checklist":
                    cl = parse_query_checklist(rec["record"]["parsed"], cfg.policy())
                    ctx.query_checklists[rec["key"]] = (cl, GenerationRecord(**{k: v for k, v in rec["record"].items()}))
                    kept.append(rec)
                elif (rec.get("query_id"), rec.get("model_id"), rec.get("replicate")) in done:
                    kept.append(rec)
            path.write_text("".join(jsonio.dumps(r) + "\n" for r in kept), "utf-8")
            if done:
                log.info("resuming run %s: %d of %d triples already complete", run_id, len(done), len(tasks))

    pending = [t for t in tasks if (t[1].id, t[0], t[2]) not in done]

    def run_one(task: tuple[str, BenchQuery, int]) -> list[dict[str, Any]]:
        model, q, rep = task
        sink: list[dict[str, Any]] = []
        evaluate(q, reports[model][q.id] or "", ctx, model_id=model, replicate=rep, run_id=run_id, sink=sink)
        return sink

    fh = path.open("a", encoding="utf-8") if path is not None else None
    try:
        # The query-checklist memo is filled before fan-out so concurrent tasks never race on it.
        first_per_query = {}
        for t in pending:
            first_per_query.setdefault(t[1].id, t)
        warm = list(first_per_query.values())
        rest = [t for t in pending if t not in warm]
        for batch in (warm, rest):
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                for sink in pool.map(run_one, batch):
                    for rec in sink:
                        if rec["type"] == "result":
                            done[(rec["query_id"], rec["model_id"], rec["replicate"])] = rec
                        if fh:
                            fh.write(jsonio.dumps(rec) + "\n")
                    if fh:
                        fh.flush()
    finally:
        if fh:
            fh.close()

    results = [done[(q.id, m, r)]["record"] for m, q, r in tasks]
    rows = leaderboard(results)
    if out_dir is not None:
        write_summary(Path(out_dir), run_id, rows, missing, cfg)
    return BenchRun(run_id, rows, missing, results, Path(out_dir) if out_dir else None)


def write_summary(out_dir: Path, run_id: str, rows: Sequence[LeaderboardRow], missing: Sequence[MissingReport], cfg: RunConfig | None = None) -> None:
    summary = {
        "run_id": run_id,
        "rows": [r.to_dict() for r in rows],
        "missing_reports": [m.to_dict() for m in missing],
    }
    if cfg is not None:
        summary["config"] = cfg.fingerprint()
    (out_dir / SUMMARY_FILE).write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n", "utf-8")


def write_tables(rows: Sequence[LeaderboardRow], out_dir: str | Path, figures: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "leaderboard.txt", out / "leaderboard.csv", out / "leaderboard.json"]
    paths[0].write_text(format_table(rows), "utf-8")
    paths[1].write_text(format_csv(rows), "utf-8")
    paths[2].write_text(json.dumps([r.to_dict() for r in rows], indent=2, ensure_ascii=False) + "\n", "utf-8")
    if figures and rows:
        from .plotting import plot_leaderboard

        paths += plot_leaderboard(rows, out)
    return paths
