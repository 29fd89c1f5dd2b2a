"""Core value types: intents, domains, directives, constraints, snippets,
reports, and ledgers.

Everything here is an immutable record validated at construction; instances
are safe to share between concurrent workers.  Canonical serialization is
UTF-8 JSON with snake_case field names; ``canonical_json`` sorts keys and
uses compact separators so equal values are byte-identical.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from .commands import PATH_RE, SENTINEL


class Domain(str, Enum):
    """The closed set of editing domains, in canonical order."""

    GEO = "geo"
    MAT = "mat"
    LIGHT = "light"
    CAM = "cam"
    BG = "bg"

    @property
    def index(self) -> int:
        return _DOMAIN_INDEX[self]

    @classmethod
    def parse(cls, tag: str) -> "Domain":
        try:
            return cls(tag)
        except ValueError:
            allowed = ", ".join(d.value for d in cls)
            raise ValueError(f"unknown domain {tag!r}; expected one of: {allowed}") from None


_DOMAIN_INDEX = {Domain.GEO: 0, Domain.MAT: 1, Domain.LIGHT: 2, Domain.CAM: 3, Domain.BG: 4}

ALL_DOMAINS = tuple(sorted(Domain, key=lambda d: d.index))


def canonical_domain_order(domains: Iterable[Domain]) -> list[Domain]:
    """Sort domains by canonical index; stable, total, duplicate-preserving-free."""
    return sorted(set(domains), key=lambda d: d.index)


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


def _check_finite(x: float, what: str) -> float:
    x = float(x)
    _require(math.isfinite(x), f"{what} must be finite")
    return x


RGB = tuple[float, float, float]
ConstraintValue = Union[float, RGB]


@dataclass(frozen=True)
class ImageRef:
    """Opaque reference-image payload attached to an intent."""

    data: bytes
    media_type: str = "image/png"

    def __post_init__(self) -> None:
        _require(len(self.data) > 0, "reference image must be non-empty")
        _require(bool(self.media_type.strip()), "media_type must be non-empty")


@dataclass(frozen=True)
class UserIntent:
    text: str
    image: Optional[ImageRef] = None

    def __post_init__(self) -> None:
        _require(bool(self.text.strip()), "intent text must be non-empty")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "image": None if self.image is None else {"media_type": self.image.media_type,
                                                      "size": len(self.image.data)},
        }


@dataclass(frozen=True)
class SemanticFactorSet:
    """Per-domain semantic factors extracted from an intent."""

    entries: tuple[tuple[Domain, str], ...]

    def __post_init__(self) -> None:
        domains = [d for d, _ in self.entries]
        _require(len(set(domains)) == len(domains), "at most one factor per domain")
        for d, text in self.entries:
            _require(isinstance(d, Domain), "factor keys must be Domain members")
            _require(bool(text.strip()), f"factor for {d.value} must be non-empty")
        ordered = tuple(sorted(self.entries, key=lambda kv: kv[0].index))
        object.__setattr__(self, "entries", ordered)

    @classmethod
    def from_mapping(cls, mapping: Mapping[Domain, str]) -> "SemanticFactorSet":
        return cls(tuple(mapping.items()))

    def domains(self) -> list[Domain]:
        return [d for d, _ in self.entries]

    def get(self, domain: Domain) -> Optional[str]:
        for d, text in self.entries:
            if d is domain:
                return text
        return None

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {d.value: text for d, text in self.entries}


@dataclass(frozen=True)
class Directive:
    """A domain-scoped semantic editing instruction; never executable code."""

    domain: Domain
    specification: str
    provenance: str

    def __post_init__(self) -> None:
        _require(bool(self.specification.strip()), "directive specification must be non-empty")
        _require(SENTINEL not in self.specification,
                 "directive must be semantic text, not an executable command script")

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.value,
            "specification": self.specification,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class Plan:
    intent: UserIntent
    directives: tuple[Directive, ...]
    created_at: int  # monotonic microseconds

    def __post_init__(self) -> None:
        _require(1 <= len(self.directives) <= 5, "plan must carry between 1 and 5 directives")
        domains = [d.domain for d in self.directives]
        _require(len(set(domains)) == len(domains), "directive domains must be pairwise distinct")
        ordered = tuple(sorted(self.directives, key=lambda d: d.domain.index))
        object.__setattr__(self, "directives", ordered)
        _require(int(self.created_at) >= 0, "created_at must be a non-negative timestamp")

    def domains(self) -> list[Domain]:
        return [d.domain for d in self.directives]

    def to_dict(self) -> dict:
        return {
            "intent": self.intent.to_dict(),
            "directives": [d.to_dict() for d in self.directives],
            "created_at": self.created_at,
        }


def _validate_constraint_value(path: str, value: ConstraintValue) -> ConstraintValue:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = _check_finite(value, f"constraint value for {path}")
        if path.split(".")[0] == "shapekey":
            _require(0.0 <= v <= 1.0, f"shape-key value {v} out of range [0, 1]")
        return v
    if isinstance(value, Sequence) and len(value) == 3:
        channels = tuple(_check_finite(c, f"RGB channel for {path}") for c in value)
        for c in channels:
            _require(0.0 <= c <= 1.0, f"RGB channel {c} out of range [0, 1]")
        return channels
    raise ValueError(f"constraint value for {path} must be a scalar or an RGB triple")


@dataclass(frozen=True)
class HardConstraint:
    """A non-negotiable scene-attribute binding (path = value)."""

    path: str
    value: ConstraintValue

    def __post_init__(self) -> None:
        _require(bool(PATH_RE.match(self.path)), f"constraint path {self.path!r} is malformed")
        object.__setattr__(self, "value", _validate_constraint_value(self.path, self.value))

    def value_as_json(self) -> Any:
        if isinstance(self.value, tuple):
            return list(self.value)
        return self.value

    def to_dict(self) -> dict:
        return {"path": self.path, "value": self.value_as_json()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "HardConstraint":
        value = data["value"]
        if isinstance(value, list):
            value = tuple(value)
        return cls(path=str(data["path"]), value=value)


@dataclass(frozen=True)
class ConstraintSet:
    domain: Domain
    constraints: tuple[HardConstraint, ...] = ()

    def __post_init__(self) -> None:
        paths = [c.path for c in self.constraints]
        _require(len(set(paths)) == len(paths), "constraint paths must be pairwise distinct")
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def __len__(self) -> int:
        return len(self.constraints)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.value,
            "constraints": [c.to_dict() for c in self.constraints],
        }


@dataclass(frozen=True)
class CodeSnippet:
    domain: Domain
    body: str
    generation_index: int = 0
    temperature: float = 0.0

    def __post_init__(self) -> None:
        _require(bool(self.body.strip()), "snippet body must be non-empty")
        _require(self.generation_index >= 0, "generation_index must be >= 0")
        _require(self.temperature >= 0.0, "temperature must be >= 0")

    def next_generation(self, body: str) -> "CodeSnippet":
        """Successor snippet after one debug repair (index advances by 1)."""
        return CodeSnippet(domain=self.domain, body=body,
                           generation_index=self.generation_index + 1,
                           temperature=self.temperature)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.value,
            "body": self.body,
            "generation_index": self.generation_index,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CodeSnippet":
        return cls(domain=Domain.parse(data["domain"]), body=data["body"],
                   generation_index=int(data.get("generation_index", 0)),
                   temperature=float(data.get("temperature", 0.0)))


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    location: Optional[int] = None  # 1-based line number

    def __post_init__(self) -> None:
        _require(bool(self.code.strip()), "diagnostic code must be non-empty")

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "location": self.location}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Diagnostic":
        return cls(code=data["code"], message=data.get("message", ""),
                   location=data.get("location"))


@dataclass(frozen=True)
class ValidationReport:
    verdict: str  # "pass" | "fail"
    diagnostics: tuple[Diagnostic, ...] = ()

    def __post_init__(self) -> None:
        _require(self.verdict in ("pass", "fail"), "verdict must be 'pass' or 'fail'")
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))
        if self.verdict == "pass":
            _require(not self.diagnostics, "pass verdict must carry no diagnostics")
        else:
            _require(len(self.diagnostics) >= 1, "fail verdict must carry at least one diagnostic")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "diagnostics": [d.to_dict() for d in self.diagnostics]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ValidationReport":
        return cls(verdict=data["verdict"],
                   diagnostics=tuple(Diagnostic.from_dict(d) for d in data.get("diagnostics", [])))


def passed_report() -> ValidationReport:
    return ValidationReport(verdict="pass")


def failed_report(*diagnostics: Diagnostic) -> ValidationReport:
    return ValidationReport(verdict="fail", diagnostics=tuple(diagnostics))


def _check_micros(value: int, what: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), f"{what} must be an integer")
    _require(value >= 0, f"{what} must be >= 0")
    return value


@dataclass(frozen=True)
class LatencyLedger:
    """Attributed latency buckets, integer microseconds (no float drift)."""

    llm_micros: int = 0
    render_micros: int = 0
    other_micros: int = 0

    def __post_init__(self) -> None:
        _check_micros(self.llm_micros, "llm_micros")
        _check_micros(self.render_micros, "render_micros")
        _check_micros(self.other_micros, "other_micros")

    def total(self) -> int:
        return self.llm_micros + self.render_micros + self.other_micros

    def __add__(self, other: "LatencyLedger") -> "LatencyLedger":
        return LatencyLedger(self.llm_micros + other.llm_micros,
                             self.render_micros + other.render_micros,
                             self.other_micros + other.other_micros)

    def to_dict(self) -> dict:
        return {"llm_micros": self.llm_micros, "render_micros": self.render_micros,
                "other_micros": self.other_micros}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LatencyLedger":
        return cls(llm_micros=int(data.get("llm_micros", 0)),
                   render_micros=int(data.get("render_micros", 0)),
                   other_micros=int(data.get("other_micros", 0)))


def ledger_total(ledger: LatencyLedger) -> int:
    """Exact integer sum of the three latency buckets.

    Python integers are arbitrary precision, so the sum can never silently
    wrap; a non-integer input fails loudly at construction instead.
    """
    return ledger.total()


@dataclass(frozen=True)
class CallUsage:
    """One gateway call's contribution to the usage ledger."""

    role_id: str
    prompt_tokens: int
    completion_tokens: int
    wall_micros: int

    def __post_init__(self) -> None:
        _require(self.prompt_tokens >= 0, "prompt_tokens must be >= 0")
        _require(self.completion_tokens >= 0, "completion_tokens must be >= 0")
        _check_micros(self.wall_micros, "wall_micros")

    def to_dict(self) -> dict:
        return {"role_id": self.role_id, "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens, "wall_micros": self.wall_micros}


@dataclass(frozen=True)
class UsageLedger:
    """Token totals plus the per-call breakdown they are derived from."""

    calls: tuple[CallUsage, ...] = ()

    @property
    def prompt_tokens(self) -> int:
        return sum(c.prompt_tokens for c in self.calls)

    @property
    def completion_tokens(self) -> int:
        return sum(c.completion_tokens for c in self.calls)

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def role_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.calls:
            out[c.role_id] = out.get(c.role_id, 0) + c.prompt_tokens + c.completion_tokens
        return out

    def with_call(self, call: CallUsage) -> "UsageLedger":
        return UsageLedger(self.calls + (call,))

    def to_dict(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "calls": [c.to_dict() for c in self.calls],
        }
