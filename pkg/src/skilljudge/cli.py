"""Command line entry point: validate, eval, bench and report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from .errors import BackendError, JudgeError, ParseError, ToolError
from .pipeline import (
    Context,
    RunConfig,
    format_csv,
    format_table,
    ingest,
    leaderboard,
    load_reports,
    read_results,
    run_replicates,
    write_tables,
)
from .taxonomy import default_skill_library, load_skill_library

EXIT_OK, EXIT_VALIDATION, EXIT_BACKEND, EXIT_PARTIAL = 0, 1, 2, 3
_BACKEND_STAGES = {"query_checklist", "report_checklist", "verify", "judge"}

log = logging.getLogger("skilljudge")


def _abs(p: str | None) -> str | None:
    return str(Path(p).resolve()) if p else None


def load_config(args: argparse.Namespace) -> RunConfig:
    """Config file values, overridden by any flag given explicitly on the command line."""
    doc: dict[str, Any] = {}
    base = None
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ParseError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(path.read_text("utf-8")) or {}
        except yaml.YAMLError as e:
            raise ParseError(str(e), str(path)) from None
        if not isinstance(doc, dict):
            raise ParseError("config must be a mapping", "$")
        base = path.parent
    overrides = {
        "dataset": _abs(getattr(args, "dataset", None)),
        "reports_dir": _abs(getattr(args, "reports", None)),
        "output_dir": _abs(getattr(args, "out", None)),
        "replicates": getattr(args, "replicates", None),
        "tau": getattr(args, "tau", None),
        "tokenizer": getattr(args, "tokenizer", None),
        "parallelism": getattr(args, "parallelism", None),
        "tool_budget": getattr(args, "tool_budget", None),
        "skill_library": _abs(getattr(args, "skills", None)),
        "current_date": getattr(args, "current_date", None),
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(doc, base=base)


def _exit_code(err: JudgeError) -> int:
    if isinstance(err, (BackendError, ToolError)) or err.stage in _BACKEND_STAGES:
        return EXIT_BACKEND
    return EXIT_VALIDATION


def cmd_validate(args: argparse.Namespace) -> int:
    cfg_skills = cfg_dataset = None
    if args.config:
        cfg = load_config(args)
        cfg_skills, cfg_dataset = cfg.skill_library, cfg.dataset
    skills_path = args.skills or cfg_skills
    lib = load_skill_library(Path(skills_path).read_bytes()) if skills_path else default_skill_library()
    print(f"skill library {lib.version}: {len(lib.skills)} skills ok")
    dataset = args.dataset or cfg_dataset
    if dataset:
        queries = ingest(dataset)
        print(f"dataset {dataset}: {len(queries)} queries ok")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    if not cfg.dataset:
        raise ParseError("--dataset (or dataset in the config) is required")
    queries = {q.id: q for q in ingest(cfg.dataset)}
    if args.query_id not in queries:
        raise ParseError(f"query id {args.query_id} not in dataset", "--query-id")
    report = Path(args.report).read_text("utf-8")
    from .pipeline import evaluate

    ctx = Context.build(cfg)
    sink: list[dict[str, Any]] = []
    result = evaluate(queries[args.query_id], report, ctx, model_id=args.model_id, run_id="single", sink=sink)
    if args.records:
        Path(args.records).write_text("".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in sink), "utf-8")
    print(json.dumps(result.to_dict(), indent=2, ensure_ascii=False))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    if not cfg.dataset or not cfg.reports_dir:
        raise ParseError("dataset and reports_dir are required (flags or config)")
    queries = ingest(cfg.dataset)
    reports = load_reports(cfg.reports_dir, queries)
    run = run_replicates(queries, reports, cfg, out_dir=cfg.output_dir)
    paths = write_tables(run.rows, cfg.output_dir, figures=not args.no_figures)
    sys.stdout.write(format_table(run.rows))
    for p in paths:
        log.info("wrote %s", p)
    if run.missing:
        for m in run.missing:
            print(f"missing report: {m.model_id}/{m.query_id}.txt", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    if not (run_dir / "results.jsonl").exists():
        raise ParseError(f"no results.jsonl in {run_dir}")
    rows = leaderboard(read_results(run_dir))
    write_tables(rows, args.out or run_dir, figures=not args.no_figures)
    if args.format == "csv":
        sys.stdout.write(format_csv(rows))
    elif args.format == "json":
        print(json.dumps([r.to_dict() for r in rows], indent=2, ensure_ascii=False))
    else:
        sys.stdout.write(format_table(rows))
    summary = run_dir / "summary.json"
    if summary.exists() and json.loads(summary.read_text("utf-8")).get("missing_reports"):
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skilljudge", description="Skill-conditioned checklist judging of research reports.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a skill library and dataset")
    v.add_argument("--config")
    v.add_argument("--skills")
    v.add_argument("--dataset")
    v.set_defaults(func=cmd_validate)

    def run_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="YAML or JSON run config")
        sp.add_argument("--dataset")
        sp.add_argument("--skills")
        sp.add_argument("--tau", type=float)
        sp.add_argument("--tokenizer")
        sp.add_argument("--parallelism", type=int)
        sp.add_argument("--tool-budget", type=int)
        sp.add_argument("--current-date")

    e = sub.add_parser("eval", help="evaluate one report against one query")
    run_flags(e)
    e.add_argument("--query-id", type=int, required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--model-id", default="model")
    e.add_argument("--records", help="write stage records (JSONL) here")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="run every model over the dataset with replicates")
    run_flags(b)
    b.add_argument("--reports", help="directory of <model_id>/<query_id>.txt")
    b.add_argument("--out")
    b.add_argument("--replicates", type=int)
    b.add_argument("--no-figures", action="store_true")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="rebuild leaderboard tables and figures from a run directory")
    r.add_argument("--run", required=True)
    r.add_argument("--out")
    r.add_argument("--format", choices=("txt", "csv", "json"), default="txt")
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except JudgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return _exit_code(e)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
