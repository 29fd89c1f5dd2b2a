"""Planner: one structured-output gateway call that disentangles an intent
into per-domain semantic factors and decomposes them into a Plan.

The two stages share a single model round-trip; factors are logged before
directives so the stage contract is auditable.  Decomposition itself is
deterministic: one directive per factor domain, canonical order, and the
factor text as the fallback specification when the model supplies no
separate directive phrasing.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from .errors import EmptyFactorSet, EmptyIntent, SchemaViolation
from .gateway import CompletionRequest, GatewaySession
from .resources import data_text
from .model import (
    ALL_DOMAINS,
    Directive,
    Domain,
    ImageRef,
    Plan,
    SemanticFactorSet,
    UserIntent,
    canonical_json,
)

log = logging.getLogger("ezblender.planner")

Clock = Callable[[], int]


def monotonic_clock() -> int:
    return time.monotonic_ns() // 1000


DEFAULT_PLANNER_TEMPLATE = data_text("templates/planner.txt")

IMAGE_PREPASS_PROMPT = (
    "Describe the attached reference image as a short scene description "
    "usable for 3D editing guidance."
)


def make_intent(text: str, image: Optional[ImageRef] = None) -> UserIntent:
    if not text or not text.strip():
        raise EmptyIntent("intent text is empty")
    return UserIntent(text=text, image=image)


@dataclass(frozen=True)
class PlannerOutput:
    """Validated structured output of the planner call."""

    factors: tuple[tuple[Domain, str], ...]
    directives: tuple[tuple[Domain, str], ...]
    rationale: Optional[str] = None

    def factor_set(self) -> SemanticFactorSet:
        return SemanticFactorSet(self.factors)

    def directive_text(self, domain: Domain) -> Optional[str]:
        for d, text in self.directives:
            if d is domain:
                return text
        return None

    def canonical_dict(self) -> dict:
        return {
            "factors": {d.value: t for d, t in self.factors},
            "directives": {d.value: t for d, t in self.directives},
            "rationale": self.rationale,
        }

    def canonical_json(self) -> str:
        return canonical_json(self.canonical_dict())


def parse_planner_output(text: str) -> PlannerOutput:
    """Validate and normalize raw model output against the planner schema.

    Raises SchemaViolation with a message suitable for the repair re-prompt.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"planner output is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation("planner output must be a JSON object")

    def read_map(key: str) -> dict[Domain, str]:
        raw = data.get(key, {})
        if not isinstance(raw, Mapping):
            raise SchemaViolation(f"{key!r} must be an object of domain -> text")
        out: dict[Domain, str] = {}
        for tag, value in raw.items():
            try:
                domain = Domain.parse(str(tag))
            except ValueError as exc:
                raise SchemaViolation(str(exc)) from exc
            if not isinstance(value, str) or not value.strip():
                raise SchemaViolation(f"{key}[{tag}] must be a non-empty string")
            out[domain] = value.strip()
        return out

    factors = read_map("factors")
    if not factors:
        raise SchemaViolation("planner output carries no factors")
    directives = read_map("directives")
    for domain in directives:
        if domain not in factors:
            raise SchemaViolation(
                f"directive for {domain.value!r} has no matching factor")
    # per-factor directive text defaults to the factor itself
    merged = {d: directives.get(d, factors[d]) for d in factors}
    rationale = data.get("rationale")
    if rationale is not None and not isinstance(rationale, str):
        raise SchemaViolation("rationale must be a string when present")
    order = lambda kv: kv[0].index  # noqa: E731
    return PlannerOutput(
        factors=tuple(sorted(factors.items(), key=order)),
        directives=tuple(sorted(merged.items(), key=order)),
        rationale=rationale,
    )


class Planner:
    def __init__(self, session: GatewaySession, template: str = DEFAULT_PLANNER_TEMPLATE,
                 clock: Clock = monotonic_clock, max_tokens: int = 1024,
                 image_prepass: bool = True):
        self.session = session
        self.template = template
        self.clock = clock
        self.max_tokens = max_tokens
        self.image_prepass = image_prepass

    def _prompt_text(self, intent: UserIntent) -> str:
        text = intent.text
        if intent.image is not None and self.image_prepass:
            description = self.session.complete(CompletionRequest(
                role_id="planner",
                system_prompt=IMAGE_PREPASS_PROMPT,
                user_payload=f"media_type={intent.image.media_type} "
                             f"bytes={len(intent.image.data)}",
                temperature=0.0,
                max_tokens=self.max_tokens,
            )).text.strip()
            text = f"{text}\n\nreference image description: {description}"
        return text

    def _invoke(self, intent: UserIntent) -> PlannerOutput:
        if not intent.text.strip():
            raise EmptyIntent("intent text is empty")
        prompt = self._prompt_text(intent)
        system_prompt = self.template.replace("{{user_prompt}}", prompt)
        request = CompletionRequest(role_id="planner", system_prompt=system_prompt,
                                    user_payload=prompt, temperature=0.0,
                                    max_tokens=self.max_tokens)
        response = self.session.complete(request)
        try:
            return parse_planner_output(response.text)
        except SchemaViolation as first:
            # one schema-repair retry with the validation error attached
            retry = CompletionRequest(
                role_id="planner", system_prompt=system_prompt,
                user_payload=f"{prompt}\n\nYour previous reply was rejected: {first}. "
                             f"Reply with valid JSON only.",
                temperature=0.0, max_tokens=self.max_tokens)
            try:
                return parse_planner_output(self.session.complete(retry).text)
            except SchemaViolation as second:
                raise SchemaViolation(
                    f"planner output failed schema validation after retry: {second}"
                ) from second

    def disentangle(self, intent: UserIntent) -> SemanticFactorSet:
        output = self._invoke(intent)
        factors = output.factor_set()
        log.info("factors: %s", factors.to_dict())
        return factors

    def decompose(self, factors: SemanticFactorSet,
                  intent: Optional[UserIntent] = None,
                  directive_texts: Optional[Mapping[Domain, str]] = None) -> Plan:
        """Pure decomposition: one directive per factor domain, canonical order.

        With no separate directive phrasing, the factor text itself is the
        directive specification (identity routing).
        """
        if len(factors) == 0:
            raise EmptyFactorSet("no semantic factors to decompose")
        created_at = self.clock()
        provenance = f"plan-{created_at}"
        directives = []
        for domain, factor_text in factors.entries:
            text = (directive_texts or {}).get(domain, factor_text)
            directives.append(Directive(domain=domain, specification=text,
                                        provenance=provenance))
        plan = Plan(intent=intent if intent is not None else _bare_factor_intent(factors),
                    directives=tuple(directives), created_at=created_at)
        log.info("directives: %s", {d.domain.value: d.specification for d in plan.directives})
        return plan

    def plan(self, intent: UserIntent) -> Plan:
        """Single combined round-trip; factors are logged before directives."""
        output = self._invoke(intent)
        factors = output.factor_set()
        log.info("factors: %s", factors.to_dict())
        if len(factors) == 0:
            raise EmptyFactorSet("planner returned no factors")
        created_at = self.clock()
        provenance = f"plan-{created_at}"
        directives = tuple(
            Directive(domain=domain,
                      specification=output.directive_text(domain) or factor_text,
                      provenance=provenance)
            for domain, factor_text in factors.entries)
        plan = Plan(intent=intent, directives=directives, created_at=created_at)
        log.info("directives: %s", {d.domain.value: d.specification for d in plan.directives})
        return plan


def _bare_factor_intent(factors: SemanticFactorSet) -> UserIntent:
    # decompose() is callable with bare factors; synthesize a stand-in intent
    # so the Plan stays a complete record.
    return UserIntent(text="; ".join(text for _, text in factors.entries))


def bypass_plan(intent: UserIntent, clock: Clock = monotonic_clock) -> Plan:
    """Reasoning-off ablation: fan the raw prompt out to all five domains
    without any gateway call."""
    if not intent.text.strip():
        raise EmptyIntent("intent text is empty")
    created_at = clock()
    provenance = f"plan-{created_at}"
    directives = tuple(Directive(domain=d, specification=intent.text, provenance=provenance)
                       for d in ALL_DOMAINS)
    return Plan(intent=intent, directives=directives, created_at=created_at)
