"""Domain-expert sub-agents and the session runner.

Each domain runs one bounded cycle: ground the directive into hard
constraints, generate a snippet at the domain's temperature, then
validate/repair up to the refine budget.  Cycles run concurrently (one lane
per domain); validated snippets are applied to the scene strictly in
canonical domain order, so cross-domain conflicts resolve reproducibly.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import debug_agent
from .commands import SENTINEL_HEADER, format_set
from .errors import (
    ConstraintUnsatisfiable,
    ExecutorUnreachable,
    SchemaViolation,
    Unrepairable,
)
from .gateway import CompletionRequest, GatewaySession
from .model import (
    ALL_DOMAINS,
    CodeSnippet,
    ConstraintSet,
    Diagnostic,
    Directive,
    Domain,
    HardConstraint,
    LatencyLedger,
    Plan,
    UserIntent,
    ValidationReport,
    canonical_domain_order,
    canonical_json,
    failed_report,
)
from .planner import Clock, Planner, bypass_plan, monotonic_clock
from .resources import data_text
from .simscene import ExecutorSession, RenderResult, SceneManifest

log = logging.getLogger("ezblender.subagents")

# Default sampling temperatures per domain; higher values permit freer
# realization of the directive's surface form.  Config, not doctrine.
DEFAULT_TEMPERATURES: dict[Domain, float] = {
    Domain.GEO: 0.2,
    Domain.MAT: 0.4,
    Domain.LIGHT: 0.4,
    Domain.CAM: 0.1,
    Domain.BG: 0.5,
}

DEFAULT_REFINE_BUDGET = 5

DEFAULT_SUBAGENT_TEMPLATE = data_text("templates/subagent.txt")


@dataclass(frozen=True)
class SubAgentProfile:
    domain: Domain
    system_prompt: str = DEFAULT_SUBAGENT_TEMPLATE
    temperature: float = 0.0
    refine_budget: int = DEFAULT_REFINE_BUDGET

    def __post_init__(self) -> None:
        if self.refine_budget < 1:
            raise ValueError("refine_budget must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def rendered_prompt(self) -> str:
        return self.system_prompt.replace("{{domain}}", self.domain.value)


def default_profiles() -> dict[Domain, SubAgentProfile]:
    return {d: SubAgentProfile(domain=d, temperature=DEFAULT_TEMPERATURES[d])
            for d in ALL_DOMAINS}


@dataclass(frozen=True)
class RefineState:
    directive: Directive
    constraints: ConstraintSet
    current: CodeSnippet
    attempts: tuple[tuple[CodeSnippet, ValidationReport], ...] = ()
    status: str = "in-progress"  # in-progress | succeeded | failed

    def __post_init__(self) -> None:
        if self.status not in ("in-progress", "succeeded", "failed"):
            raise ValueError(f"invalid refine status {self.status!r}")
        if self.status == "succeeded":
            if not self.attempts or not self.attempts[-1][1].passed:
                raise ValueError("succeeded state requires a passing final report")


@dataclass(frozen=True)
class SubResult:
    domain: Domain
    status: str  # succeeded | failed
    final_snippet: Optional[CodeSnippet]
    reports: tuple[ValidationReport, ...]
    latency: LatencyLedger
    constraints: ConstraintSet
    debug_calls: int = 0
    applied: bool = False

    def __post_init__(self) -> None:
        if self.status not in ("succeeded", "failed"):
            raise ValueError(f"invalid sub-result status {self.status!r}")
        if self.status == "succeeded" and self.final_snippet is None:
            raise ValueError("succeeded sub-result requires a final snippet")

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.value,
            "status": self.status,
            "final_snippet": None if self.final_snippet is None else self.final_snippet.to_dict(),
            "reports": [r.to_dict() for r in self.reports],
            "latency": self.latency.to_dict(),
            "constraints": self.constraints.to_dict(),
            "debug_calls": self.debug_calls,
            "applied": self.applied,
        }


@dataclass(frozen=True)
class PlanOutcome:
    results: tuple[SubResult, ...]  # canonical domain order
    ledger: LatencyLedger
    status: str  # all-succeeded | partial | all-failed
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "results": [r.to_dict() for r in self.results],
            "ledger": self.ledger.to_dict(),
            "status": self.status,
            "warnings": list(self.warnings),
        }

    def canonical_json(self) -> str:
        return canonical_json(self.to_dict())


@dataclass(frozen=True)
class SessionReport:
    plan: Plan
    outcome: PlanOutcome
    usage: Mapping
    latency: LatencyLedger
    render_handles: tuple[str, ...] = ()
    scores: Optional[Mapping] = None
    ablations: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "outcome": self.outcome.to_dict(),
            "usage": dict(self.usage),
            "latency": self.latency.to_dict(),
            "render_handles": list(self.render_handles),
            "scores": None if self.scores is None else dict(self.scores),
            "ablations": dict(self.ablations),
        }


def parse_constraint_payload(text: str, domain: Domain) -> ConstraintSet:
    """Parse a structured grounding reply: {"constraints": [{path, value}]}."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"grounding reply is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("constraints", None), list):
        raise SchemaViolation("grounding reply must be {\"constraints\": [...]}")
    constraints = []
    for i, item in enumerate(data["constraints"]):
        try:
            constraints.append(HardConstraint.from_dict(item))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"constraint {i} is malformed: {exc}") from exc
    try:
        return ConstraintSet(domain=domain, constraints=tuple(constraints))
    except ValueError as exc:
        raise SchemaViolation(str(exc)) from exc


class SessionRunner:
    """Owns one gateway session and one executor session for a user request."""

    def __init__(self, session: GatewaySession, executor: ExecutorSession,
                 profiles: Optional[Mapping[Domain, SubAgentProfile]] = None,
                 planner: Optional[Planner] = None,
                 sequential: bool = False,
                 no_reasoning: bool = False,
                 no_autonomy: bool = False,
                 measure_overhead: bool = False,
                 render_views: int = 1,
                 clock: Clock = monotonic_clock,
                 max_tokens: int = 2048):
        self.session = session
        self.executor = executor
        self.profiles = dict(profiles) if profiles else default_profiles()
        self.planner = planner if planner is not None else Planner(session, clock=clock)
        self.sequential = sequential
        self.no_reasoning = no_reasoning
        self.no_autonomy = no_autonomy
        self.measure_overhead = measure_overhead
        self.render_views = render_views
        self.clock = clock
        self.max_tokens = max_tokens

    def _profile(self, domain: Domain) -> SubAgentProfile:
        profile = self.profiles.get(domain)
        if profile is None:
            raise ValueError(f"no sub-agent profile for domain {domain.value!r}")
        if self.no_autonomy and profile.refine_budget != 1:
            profile = dataclasses.replace(profile, refine_budget=1)
        return profile

    # --- per-domain steps -------------------------------------------------

    def ground_constraints(self, directive: Directive,
                           _llm_sink: Optional[list[int]] = None) -> ConstraintSet:
        """Extract the directive's non-negotiable requirements as path=value pairs."""
        profile = self._profile(directive.domain)
        payload = (f"directive: {directive.specification}\n"
                   "Reply with JSON only: {\"constraints\": [{\"path\": \"<dotted path>\", "
                   "\"value\": <number or [r, g, b]>}]} . "
                   "Use an empty list when the directive carries no hard requirement.")
        response = self.session.complete(CompletionRequest(
            role_id=f"subagent:{directive.domain.value}",
            system_prompt=profile.rendered_prompt(),
            user_payload=payload,
            temperature=0.0,  # grounding is deterministic by contract
            max_tokens=self.max_tokens,
        ))
        if _llm_sink is not None:
            _llm_sink.append(response.wall_micros)
        return parse_constraint_payload(response.text, directive.domain)

    def generate_snippet(self, directive: Directive, constraints: ConstraintSet,
                         profile: SubAgentProfile,
                         _llm_sink: Optional[list[int]] = None) -> CodeSnippet:
        """Sample a snippet at the domain temperature; every constraint path
        must appear verbatim, with one regeneration and then constraint
        injection as the fallback."""
        payload_lines = [f"directive: {directive.specification}"]
        if len(constraints):
            payload_lines.append("hard constraints (must appear verbatim): "
                                 + ", ".join(c.path for c in constraints.constraints))
        payload_lines.append("Reply with the command script only.")
        payload = "\n".join(payload_lines)

        def sample() -> str:
            response = self.session.complete(CompletionRequest(
                role_id=f"subagent:{directive.domain.value}",
                system_prompt=profile.rendered_prompt(),
                user_payload=payload,
                temperature=profile.temperature,
                max_tokens=self.max_tokens,
            ))
            if _llm_sink is not None:
                _llm_sink.append(response.wall_micros)
            return response.text

        body = sample()
        missing = [c for c in constraints.constraints if c.path not in body]
        if missing:
            body = sample()  # one regeneration before falling back
            missing = [c for c in constraints.constraints if c.path not in body]
        if missing:
            injected = []
            for constraint in missing:
                try:
                    injected.append(format_set(constraint.path, constraint.value))
                except (TypeError, ValueError) as exc:
                    raise ConstraintUnsatisfiable(
                        f"cannot express constraint {constraint.path}: {exc}") from exc
            body = body.rstrip("\n") + "\n" + "\n".join(injected)
            log.info("injected %d constraint command(s) for %s",
                     len(injected), directive.domain.value)
        return CodeSnippet(domain=directive.domain, body=body, generation_index=0,
                           temperature=profile.temperature)

    def refine(self, directive: Directive,
               profile: Optional[SubAgentProfile] = None) -> SubResult:
        """Full bounded cycle for one domain: ground, generate, then
        propose-verify-refine until pass or budget exhaustion."""
        profile = profile if profile is not None else self._profile(directive.domain)
        started = time.monotonic_ns()
        llm_micros: list[int] = []
        reports: list[ValidationReport] = []
        debug_calls = 0
        empty = ConstraintSet(domain=directive.domain)

        def finish(status: str, snippet: Optional[CodeSnippet],
                   constraints: ConstraintSet) -> SubResult:
            llm_total = sum(llm_micros)
            other = 0
            if self.measure_overhead:
                elapsed = (time.monotonic_ns() - started) // 1000
                other = max(0, elapsed - llm_total)
            return SubResult(domain=directive.domain, status=status,
                             final_snippet=snippet,
                             reports=tuple(reports),
                             latency=LatencyLedger(llm_micros=llm_total, other_micros=other),
                             constraints=constraints, debug_calls=debug_calls)

        try:
            constraints = self.ground_constraints(directive, _llm_sink=llm_micros)
            snippet = self.generate_snippet(directive, constraints, profile,
                                            _llm_sink=llm_micros)
            manifest: Optional[SceneManifest] = None
            budget = profile.refine_budget
            for attempt in range(budget):
                report = self.executor.validate(snippet)
                reports.append(report)
                if report.passed:
                    return finish("succeeded", snippet, constraints)
                if attempt == budget - 1 or self.no_autonomy:
                    return finish("failed", snippet, constraints)
                if manifest is None:
                    manifest = self.executor.introspect()
                try:
                    debug_calls += 1
                    snippet = self._repair(snippet, report, manifest, llm_micros)
                except Unrepairable as exc:
                    reports.append(failed_report(Diagnostic(
                        code="unrepairable", message=str(exc))))
                    return finish("failed", snippet, constraints)
            return finish("failed", snippet, constraints)
        except ExecutorUnreachable as exc:
            reports.append(failed_report(Diagnostic(code="transport", message=str(exc))))
            return finish("failed", None, empty)
        except (SchemaViolation, ConstraintUnsatisfiable) as exc:
            reports.append(failed_report(Diagnostic(
                code="schema" if isinstance(exc, SchemaViolation) else "constraint",
                message=str(exc))))
            return finish("failed", None, empty)

    def _repair(self, snippet: CodeSnippet, report: ValidationReport,
                manifest: SceneManifest, llm_sink: list[int]) -> CodeSnippet:
        def gateway(request: CompletionRequest):
            response = self.session.complete(request)
            llm_sink.append(response.wall_micros)
            return response

        return debug_agent.repair(snippet, report, manifest,
                                  gateway=None if self.no_autonomy else gateway)

    # --- plan execution -----------------------------------------------------

    def execute_plan(self, plan: Plan) -> PlanOutcome:
        """Run every domain cycle (concurrently unless sequential mode), then
        apply validated snippets in canonical domain order."""
        directives = list(plan.directives)
        results: dict[Domain, SubResult] = {}
        if self.sequential or len(directives) == 1:
            for directive in directives:
                results[directive.domain] = self.refine(directive)
        else:
            with ThreadPoolExecutor(max_workers=5, thread_name_prefix="subagent") as pool:
                futures = {directive.domain: pool.submit(self.refine, directive)
                           for directive in directives}
                for domain, future in futures.items():
                    results[domain] = future.result()

        ordered_domains = canonical_domain_order(results)
        warnings: list[str] = []
        written_paths: dict[str, Domain] = {}
        apply_other_micros = 0
        transport_lost = False
        for domain in ordered_domains:
            result = results[domain]
            if result.status != "succeeded":
                continue
            if transport_lost:
                results[domain] = dataclasses.replace(
                    result, status="failed",
                    reports=result.reports + (failed_report(Diagnostic(
                        code="transport", message="backend lost before application")),))
                continue
            apply_started = time.monotonic_ns()
            try:
                report, _version = self.executor.execute(result.final_snippet)
            except ExecutorUnreachable as exc:
                transport_lost = True
                results[domain] = dataclasses.replace(
                    result, status="failed",
                    reports=result.reports + (failed_report(Diagnostic(
                        code="transport", message=str(exc))),))
                continue
            if self.measure_overhead:
                apply_other_micros += (time.monotonic_ns() - apply_started) // 1000
            if not report.passed:
                results[domain] = dataclasses.replace(
                    result, status="failed", reports=result.reports + (report,))
                continue
            results[domain] = dataclasses.replace(result, applied=True)
            for path, writer in _written_paths(result.final_snippet, self.executor):
                if path in written_paths and written_paths[path] is not domain:
                    warnings.append(
                        f"path {path}: {written_paths[path].value} overwritten by "
                        f"{domain.value} (last writer wins in canonical order)")
                written_paths[path] = domain

        ordered_results = tuple(results[d] for d in ordered_domains)
        ledger = LatencyLedger(other_micros=apply_other_micros)
        for result in ordered_results:
            ledger = ledger + result.latency
        statuses = {r.status for r in ordered_results}
        if statuses == {"succeeded"}:
            status = "all-succeeded"
        elif statuses == {"failed"}:
            status = "all-failed"
        else:
            status = "partial"
        return PlanOutcome(results=ordered_results, ledger=ledger, status=status,
                           warnings=tuple(warnings))

    def run_session(self, intent: UserIntent) -> SessionReport:
        """End to end: plan, execute, render, report."""
        if self.no_reasoning:
            plan = bypass_plan(intent, clock=self.clock)
            planner_llm = 0
        else:
            before = self.session.ledger
            plan = self.planner.plan(intent)
            after = self.session.ledger
            planner_llm = sum(c.wall_micros for c in after.calls[len(before.calls):])

        outcome = self.execute_plan(plan)

        render_handles: list[str] = []
        render_micros = 0
        renders: list[RenderResult] = []
        try:
            for view in range(max(1, min(2, self.render_views))):
                result = self.executor.render(view_index=view)
                renders.append(result)
                render_handles.append(result.handle_id)
                render_micros += result.render_micros
        except Exception as exc:  # render failure degrades the report, not the session
            log.warning("session render failed: %s", exc)

        latency = outcome.ledger + LatencyLedger(llm_micros=planner_llm,
                                                 render_micros=render_micros)
        return SessionReport(
            plan=plan,
            outcome=outcome,
            usage=self.session.ledger.to_dict(),
            latency=latency,
            render_handles=tuple(render_handles),
            scores=None,
            ablations={"no_reasoning": self.no_reasoning,
                       "no_autonomy": self.no_autonomy,
                       "sequential": self.sequential},
        )


def _written_paths(snippet: CodeSnippet, executor: ExecutorSession):
    """Concrete paths a snippet writes, for cross-domain conflict warnings."""
    from .commands import SetCommand, parse_script

    try:
        commands = parse_script(snippet.body)
    except ValueError:
        return
    scene = getattr(executor, "scene", None)
    for cmd in commands:
        if not isinstance(cmd, SetCommand):
            continue
        concrete = cmd.path
        if scene is not None:
            resolved = scene.resolve(cmd.path)
            if resolved is not None:
                concrete = resolved.concrete
        yield concrete, snippet.domain
