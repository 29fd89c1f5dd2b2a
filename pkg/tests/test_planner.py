from __future__ import annotations

import json

import pytest

from conftest import make_session, turn
from ezblender.errors import (
    EmptyFactorSet,
    EmptyIntent,
    ProviderUnreachable,
    SchemaViolation,
)
from ezblender.model import ALL_DOMAINS, Domain, SemanticFactorSet, UserIntent
from ezblender.planner import (
    Planner,
    bypass_plan,
    make_intent,
    parse_planner_output,
)


def planner_with(turns, **kwargs) -> tuple[Planner, object]:
    session, provider = make_session(turns)
    return Planner(session, clock=lambda: 0, **kwargs), provider


CYBERPUNK_JSON = json.dumps({
    "factors": {"light": "neon, high-contrast lighting",
                "mat": "wet, reflective metallic materials"},
    "directives": {"light": "neon, high-contrast lighting",
                   "mat": "wet, reflective metallic materials"},
})


class TestDisentangle:
    def test_cyberpunk_factor_set(self):
        planner, _ = planner_with([turn("planner", CYBERPUNK_JSON)])
        factors = planner.disentangle(make_intent("Make the scene look cyberpunk"))
        assert factors.to_dict() == {
            "light": "neon, high-contrast lighting",
            "mat": "wet, reflective metallic materials",
        }

    def test_empty_intent(self):
        with pytest.raises(EmptyIntent):
            make_intent("")
        with pytest.raises(EmptyIntent):
            make_intent("   \n ")

    def test_scripted_single_domain(self):
        scripted = json.dumps({"factors": {"light": "blue lighting"},
                               "directives": {"light": "blue lighting"}})
        planner, _ = planner_with([turn("planner", scripted)])
        factors = planner.disentangle(make_intent("turn the light blue"))
        assert factors.domains() == [Domain.LIGHT]


class TestDecompose:
    def _planner(self):
        return planner_with([])[0]

    def test_identity_routing_and_order(self):
        factors = SemanticFactorSet(((Domain.LIGHT, "neon"), (Domain.MAT, "wet metal")))
        plan = self._planner().decompose(factors)
        assert [d.domain for d in plan.directives] == [Domain.MAT, Domain.LIGHT]
        assert plan.directives[0].specification == "wet metal"
        assert plan.directives[1].specification == "neon"

    def test_all_five_domains(self):
        factors = SemanticFactorSet(tuple((d, f"edit {d.value}") for d in ALL_DOMAINS))
        plan = self._planner().decompose(factors)
        assert len(plan.directives) == 5

    def test_empty_factor_set(self):
        with pytest.raises(EmptyFactorSet):
            self._planner().decompose(SemanticFactorSet(()))


class TestSchema:
    def test_unknown_domain_tag_rejected(self):
        with pytest.raises(SchemaViolation, match="audio"):
            parse_planner_output(json.dumps({"factors": {"audio": "boom"}}))

    def test_directive_without_factor_rejected(self):
        with pytest.raises(SchemaViolation):
            parse_planner_output(json.dumps({
                "factors": {"light": "x"}, "directives": {"mat": "y"}}))

    def test_not_json(self):
        with pytest.raises(SchemaViolation):
            parse_planner_output("plain prose, no json")

    def test_missing_directive_defaults_to_factor(self):
        output = parse_planner_output(json.dumps({"factors": {"light": "blue mood"}}))
        assert output.directive_text(Domain.LIGHT) == "blue mood"

    def test_canonical_form_is_idempotent(self):
        raw = json.dumps({"factors": {"bg": "fog", "light": "blue"},
                          "directives": {"light": "make it blue"},
                          "rationale": "r"})
        once = parse_planner_output(raw)
        twice = parse_planner_output(once.canonical_json())
        assert once.canonical_json() == twice.canonical_json()


class TestPlan:
    def test_cyberpunk_two_directives(self):
        planner, _ = planner_with([turn("planner", CYBERPUNK_JSON, 156, 64)])
        plan = planner.plan(make_intent("Make the scene look cyberpunk"))
        assert [d.domain for d in plan.directives] == [Domain.MAT, Domain.LIGHT]
        assert plan.directives[1].specification == "neon, high-contrast lighting"

    def test_schema_retry_consumes_second_turn(self):
        planner, _ = planner_with([
            turn("planner", "not json at all"),
            turn("planner", CYBERPUNK_JSON),
        ])
        plan = planner.plan(make_intent("cyberpunk please"))
        assert len(plan.directives) == 2

    def test_schema_violation_after_retry(self):
        planner, session_provider = planner_with([
            turn("planner", "garbage one"),
            turn("planner", "garbage two"),
        ])
        with pytest.raises(SchemaViolation):
            planner.plan(make_intent("cyberpunk please"))

    def test_exhausted_transcript_no_partial_plan(self):
        planner, _ = planner_with([])
        with pytest.raises(ProviderUnreachable):
            planner.plan(make_intent("anything"))

    def test_failed_call_leaves_only_ledger_entries(self):
        session, _ = make_session([turn("planner", "garbage one", 11, 3),
                                   turn("planner", "garbage two", 12, 4)])
        planner = Planner(session, clock=lambda: 0)
        with pytest.raises(SchemaViolation):
            planner.plan(make_intent("x"))
        # both failed attempts are accounted, nothing else changed
        assert [c.role_id for c in session.ledger.calls] == ["planner", "planner"]
        assert session.ledger.prompt_tokens == 23

    def test_factors_logged_before_directives(self, caplog):
        import logging

        planner, _ = planner_with([turn("planner", CYBERPUNK_JSON)])
        with caplog.at_level(logging.INFO, logger="ezblender.planner"):
            planner.plan(make_intent("cyberpunk"))
        messages = [r.message for r in caplog.records]
        factor_idx = next(i for i, m in enumerate(messages) if m.startswith("factors"))
        directive_idx = next(i for i, m in enumerate(messages) if m.startswith("directives"))
        assert factor_idx < directive_idx

    def test_template_slot_substitution(self):
        planner, provider = planner_with(
            [turn("planner", CYBERPUNK_JSON)],
            template="INSTRUCTIONS for: {{user_prompt}}")
        planner.plan(make_intent("rain city"))
        assert provider.requests[0].system_prompt == "INSTRUCTIONS for: rain city"

    def test_image_prepass_appends_description(self):
        from ezblender.model import ImageRef

        planner, provider = planner_with([
            turn("planner", "a rainy neon street at night"),  # pre-pass turn
            turn("planner", CYBERPUNK_JSON),
        ])
        intent = UserIntent(text="match this mood", image=ImageRef(data=b"\x89PNGfake"))
        planner.plan(intent)
        assert "reference image description: a rainy neon street at night" \
            in provider.requests[1].user_payload


class TestBypassPlan:
    def test_raw_prompt_to_all_five_domains(self):
        plan = bypass_plan(make_intent("make everything red"), clock=lambda: 0)
        assert len(plan.directives) == 5
        assert all(d.specification == "make everything red" for d in plan.directives)
        assert [d.domain for d in plan.directives] == list(ALL_DOMAINS)
