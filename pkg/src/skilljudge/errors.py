"""Exception hierarchy shared by every stage of the evaluation pipeline."""

from __future__ import annotations


class JudgeError(Exception):
    """Base class. ``stage`` is filled in by the pipeline when an error escapes a stage."""

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class ParseError(JudgeError):
    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class UnknownLabel(JudgeError):
    def __init__(self, label: str, location: str | None = None):
        self.label = label
        self.location = location
        where = f" at {location}" if location else ""
        super().__init__(f"unknown taxonomy label {label!r}{where}")


class MissingSkillForLabel(JudgeError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"no skill mapped to label {label!r}")


class DuplicateSkill(JudgeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"duplicate skill name {name!r}")


class SchemaError(JudgeError):
    """A model response (or wire document) violated its JSON contract."""

    def __init__(self, violation: str, location: str = "$", raw_response: str | None = None):
        self.violation = violation
        self.location = location
        self.raw_response = raw_response
        super().__init__(f"{location}: {violation}")


class BackendError(JudgeError):
    """kind is one of: transport, auth, timeout, exhausted, exhausted-script."""

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class ToolError(JudgeError):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class ToolBudgetExceeded(JudgeError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"tool budget of {budget} call(s) exhausted")


class InvalidUrl(JudgeError):
    def __init__(self, url: str):
        self.url = url
        super().__init__(f"invalid URL {url!r}")


class DanglingDependency(JudgeError):
    def __init__(self, item_id: int, claim_id: int):
        self.item_id = item_id
        self.claim_id = claim_id
        super().__init__(f"item {item_id} depends on unknown claim {claim_id}")


class EmptyChecklist(JudgeError):
    pass


class EmptyReport(JudgeError):
    pass
