"""Label taxonomy, skill library, label->skill activation and rubric composition."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterable, Mapping

import yaml

from .errors import DuplicateSkill, MissingSkillForLabel, ParseError, UnknownLabel

LEVELS = ("L1", "L2", "L3")

NO_DELIVERABLE = "(no core deliverable specified; no expert checkpoints at L1)"
NO_CHECKPOINTS = "(no expert checkpoints activated)"


@dataclass(frozen=True, order=True)
class TaxonomyLabel:
    level: str
    name: str

    def __str__(self) -> str:
        return f"{self.level}:{self.name}"


@dataclass(frozen=True)
class Taxonomy:
    """Configured vocabulary per level. Order inside each tuple is irrelevant to activation."""

    vocab: Mapping[str, tuple[str, ...]]

    def labels(self) -> list[TaxonomyLabel]:
        return [TaxonomyLabel(lvl, n) for lvl in LEVELS for n in self.vocab.get(lvl, ())]

    def contains(self, label: TaxonomyLabel) -> bool:
        return label.name in self.vocab.get(label.level, ())

    def label(self, level: str, name: str, location: str | None = None) -> TaxonomyLabel:
        lab = TaxonomyLabel(level, name)
        if not name or not self.contains(lab):
            raise UnknownLabel(f"{level}:{name}", location)
        return lab


DEFAULT_TAXONOMY = Taxonomy(
    {
        "L1": ("supplier_sourcing", "product_discovery", "market_research", "product_development"),
        "L2": (
            "supplier_evaluation",
            "price_comparison",
            "review_analysis",
            "sales_data",
            "trending_analysis",
            "platform_data",
            "competitor_analysis",
        ),
        "L3": (
            "moq_price_constraint",
            "certification_required",
            "region_specific",
            "customization_oem",
            "quality_specification",
            "logistics_shipping",
        ),
    }
)


@dataclass(frozen=True)
class Hint:
    rule: str
    reasoning: str | None = None
    require: tuple[str, ...] = ()
    examples: tuple[str, ...] = ()
    definitions: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Deliverable:
    name: str
    description: str = ""
    must_have: tuple[str, ...] = ()


@dataclass(frozen=True)
class Skill:
    name: str
    level: str
    description: str
    hints: tuple[Hint, ...]
    primary_deliverable: Deliverable | None = None
    critical_flaws: tuple[str, ...] = ()


@dataclass(frozen=True)
class SkillLibrary:
    skills: Mapping[TaxonomyLabel, Skill]
    version: str
    order: tuple[TaxonomyLabel, ...] = ()

    def rank(self, label: TaxonomyLabel) -> tuple[int, int]:
        return (LEVELS.index(label.level), self.order.index(label))


@dataclass(frozen=True)
class ComposedRubric:
    deliverable_check: str
    expert_hints: str
    activated: tuple[str, ...] = field(default_factory=tuple)


def activate_skills(labels: Iterable[TaxonomyLabel], lib: SkillLibrary) -> list[Skill]:
    """Map labels to skills, ordered L1 -> L2 -> L3 then by library declaration order."""
    uniq = set(labels)
    for lab in uniq:
        if lab not in lib.skills:
            raise UnknownLabel(str(lab))
    out: list[Skill] = []
    seen: set[str] = set()
    for lab in sorted(uniq, key=lib.rank):
        skill = lib.skills[lab]
        if skill.name not in seen:
            seen.add(skill.name)
            out.append(skill)
    return out


def _render_deliverable(skill: Skill) -> str:
    d = skill.primary_deliverable
    assert d is not None
    lines = [f"[{skill.name}] {d.name}"]
    if d.description:
        lines.append(d.description)
    if d.must_have:
        lines.append("Must have:")
        lines.extend(f"- {m}" for m in d.must_have)
    return "\n".join(lines)


def _render_hints(skill: Skill) -> str:
    lines = [f"## [{skill.level}] {skill.name}"]
    for h in skill.hints:
        lines.append(f"- {h.rule}")
        if h.reasoning:
            lines.append(f"  reasoning: {h.reasoning}")
        if h.require:
            lines.append("  require:")
            lines.extend(f"    - {r}" for r in h.require)
        if h.examples:
            lines.append("  examples:")
            lines.extend(f"    - {e}" for e in h.examples)
        if h.definitions:
            lines.append("  definitions:")
            lines.extend(f"    {k}: {v}" for k, v in h.definitions)
    if skill.critical_flaws:
        lines.append("- Critical flaws (penalize when present):")
        lines.extend(f"  - FLAW: {f}" for f in skill.critical_flaws)
    return "\n".join(lines)


def compose_rubric(skills: Iterable[Skill]) -> ComposedRubric:
    skills = list(skills)
    deliverables = [_render_deliverable(s) for s in skills if s.level == "L1" and s.primary_deliverable]
    hints = [_render_hints(s) for s in skills]
    return ComposedRubric(
        deliverable_check="\n\n".join(deliverables) if deliverables else NO_DELIVERABLE,
        expert_hints="\n\n".join(hints) if hints else NO_CHECKPOINTS,
        activated=tuple(s.name for s in skills),
    )


# -- loading -----------------------------------------------------------------


def _str(obj: Any, loc: str, *, required: bool = True) -> str | None:
    if obj is None and not required:
        return None
    if not isinstance(obj, str) or (required and not obj.strip()):
        raise ParseError("expected a non-empty string", loc)
    return obj


def _str_list(obj: Any, loc: str) -> tuple[str, ...]:
    if obj is None:
        return ()
    if isinstance(obj, str):
        return (obj,)
    if not isinstance(obj, list):
        raise ParseError("expected a list of strings", loc)
    return tuple(_str(x, f"{loc}[{i}]") for i, x in enumerate(obj))  # type: ignore[misc]


def _parse_hint(obj: Any, loc: str) -> Hint:
    if isinstance(obj, str):
        return Hint(rule=_str(obj, loc))  # type: ignore[arg-type]
    if not isinstance(obj, dict):
        raise ParseError("hint must be a string or mapping", loc)
    unknown = set(obj) - {"rule", "reasoning", "require", "examples", "definitions"}
    if unknown:
        raise ParseError(f"unknown hint field(s) {sorted(unknown)}", loc)
    defs = obj.get("definitions") or {}
    if not isinstance(defs, dict):
        raise ParseError("definitions must be a mapping", f"{loc}.definitions")
    return Hint(
        rule=_str(obj.get("rule"), f"{loc}.rule"),  # type: ignore[arg-type]
        reasoning=_str(obj.get("reasoning"), f"{loc}.reasoning", required=False),
        require=_str_list(obj.get("require"), f"{loc}.require"),
        examples=_str_list(obj.get("examples"), f"{loc}.examples"),
        definitions=tuple((str(k), str(v)) for k, v in defs.items()),
    )


def _parse_skill(obj: Any, loc: str, taxonomy: Taxonomy) -> tuple[TaxonomyLabel, Skill]:
    if not isinstance(obj, dict):
        raise ParseError("skill entry must be a mapping", loc)
    level = obj.get("label_level")
    if level not in LEVELS:
        raise ParseError(f"label_level must be one of {LEVELS}", f"{loc}.label_level")
    name = _str(obj.get("label_name"), f"{loc}.label_name")
    label = TaxonomyLabel(level, name)  # type: ignore[arg-type]
    if not taxonomy.contains(label):
        raise ParseError(f"label {label} not in the configured taxonomy", f"{loc}.label_name")
    hints_raw = obj.get("hints")
    if not isinstance(hints_raw, list) or not hints_raw:
        raise ParseError("at least one hint is required", f"{loc}.hints")
    hints = tuple(_parse_hint(h, f"{loc}.hints[{i}]") for i, h in enumerate(hints_raw))

    deliverable = None
    pd = obj.get("primary_deliverable")
    if pd is not None:
        if not isinstance(pd, dict):
            raise ParseError("primary_deliverable must be a mapping", f"{loc}.primary_deliverable")
        deliverable = Deliverable(
            name=_str(pd.get("name"), f"{loc}.primary_deliverable.name"),  # type: ignore[arg-type]
            description=_str(pd.get("description"), f"{loc}.primary_deliverable.description", required=False) or "",
            must_have=_str_list(pd.get("must_have"), f"{loc}.primary_deliverable.must_have"),
        )
    elif level == "L1":
        raise ParseError("L1 skills require a primary_deliverable", loc)

    skill = Skill(
        name=_str(obj.get("name"), f"{loc}.name"),  # type: ignore[arg-type]
        level=level,
        description=_str(obj.get("description"), f"{loc}.description", required=False) or "",
        hints=hints,
        primary_deliverable=deliverable,
        critical_flaws=_str_list(obj.get("critical_flaws"), f"{loc}.critical_flaws"),
    )
    return label, skill


def load_skill_library(source: bytes | str, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> SkillLibrary:
    """Parse a skill-library document (YAML or JSON) and check it is total over ``taxonomy``."""
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"not UTF-8: {e}", f"byte {e.start}") from None
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark else None
        raise ParseError(str(getattr(e, "problem", e)), loc) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be a mapping", "$")
    version = doc.get("version")
    if version is None or isinstance(version, (dict, list)):
        raise ParseError("missing scalar 'version'", "$.version")
    entries = doc.get("skills")
    if not isinstance(entries, list):
        raise ParseError("'skills' must be a list", "$.skills")

    skills: dict[TaxonomyLabel, Skill] = {}
    order: list[TaxonomyLabel] = []
    names: set[str] = set()
    for i, entry in enumerate(entries):
        label, skill = _parse_skill(entry, f"$.skills[{i}]", taxonomy)
        if skill.name in names:
            raise DuplicateSkill(skill.name)
        if label in skills:
            raise ParseError(f"label {label} mapped twice", f"$.skills[{i}].label_name")
        names.add(skill.name)
        skills[label] = skill
        order.append(label)
    for label in taxonomy.labels():
        if label not in skills:
            raise MissingSkillForLabel(str(label))
    return SkillLibrary(skills=skills, version=str(version), order=tuple(order))


def default_skill_library() -> SkillLibrary:
    data = resources.files("skilljudge.data").joinpath("skills.yaml").read_bytes()
    return load_skill_library(data)


def rubric_to_json(rubric: ComposedRubric) -> str:
    return json.dumps(
        {
            "activated": list(rubric.activated),
            "deliverable_check": rubric.deliverable_check,
            "expert_hints": rubric.expert_hints,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
