from __future__ import annotations

import random

import pytest

from ezblender.debug_agent import DEBUG_SYSTEM_PROMPT, repair, strategy_table
from ezblender.errors import Unrepairable
from ezblender.gateway import CompletionResponse
from ezblender.model import CodeSnippet, Diagnostic, Domain, failed_report, passed_report
from ezblender.simscene import MockExecutor, SceneManifest, SimScene, build_manifest


def snippet(body: str, domain=Domain.LIGHT, generation_index=0) -> CodeSnippet:
    return CodeSnippet(domain=domain, body=body, generation_index=generation_index)


def manifest_with_names(**names) -> SceneManifest:
    return SceneManifest(entries=(), names={k: tuple(v) for k, v in names.items()})


class TestPrecondition:
    def test_pass_report_is_rejected(self, one_light_manifest):
        with pytest.raises(ValueError, match="precondition"):
            repair(snippet("set light.key.color 0 0 1"), passed_report(), one_light_manifest)


class TestNearestNameRule:
    def test_typo_substitution_from_manifest(self):
        # bridge-style manifest carrying a capitalized light name
        manifest = manifest_with_names(light=["Light"])
        failing = snippet('lights["Lihgt"].color = (1.0, 0.0, 0.0)')
        report = failed_report(Diagnostic(code="unknown-identifier",
                                          message="unknown identifier 'Lihgt'; candidates: Light",
                                          location=1))
        repaired = repair(failing, report, manifest)
        assert 'lights["Light"]' in repaired.body
        assert "Lihgt" not in repaired.body
        assert repaired.generation_index == failing.generation_index + 1

    def test_mock_path_typo(self, one_light_manifest):
        failing = snippet("set light.kye.color 0.1 0.1 0.9")
        report = failed_report(Diagnostic(code="unknown-identifier",
                                          message="unknown identifier 'kye'; candidates: key",
                                          location=1))
        repaired = repair(failing, report, one_light_manifest)
        assert repaired.body == "set light.key.color 0.1 0.1 0.9"

    def test_tie_breaks_by_manifest_order(self):
        manifest = manifest_with_names(light=["keyz", "keyx"])
        failing = snippet("set light.keyq.color 0 0 1")
        report = failed_report(Diagnostic(code="unknown-identifier",
                                          message="unknown identifier 'keyq'"))
        repaired = repair(failing, report, manifest)
        assert "keyz" in repaired.body  # first equal-distance name wins

    def test_no_near_match_falls_to_gateway(self, one_light_manifest):
        failing = snippet("set qq_zz.ww 1.0")
        report = failed_report(Diagnostic(code="unknown-identifier",
                                          message="unknown identifier 'qq_zz'"))
        with pytest.raises(Unrepairable):
            repair(failing, report, one_light_manifest, gateway=None)


class TestDefaultValueRule:
    def test_out_of_range_replaced_by_declared_default(self, one_light_manifest):
        failing = snippet("#ezcmd v1\nset shapekey.body.smile 1.7", domain=Domain.GEO)
        report = failed_report(Diagnostic(
            code="out-of-range",
            message="value 1.7 out of range [0, 1] for shapekey.body.smile",
            location=2))
        repaired = repair(failing, report, one_light_manifest)
        assert "set shapekey.body.smile 0.0" in repaired.body
        assert "1.7" not in repaired.body

    def test_uses_validator_message_end_to_end(self, one_light_manifest, one_light_executor):
        failing = snippet("set shapekey.body.smile 1.7", domain=Domain.GEO)
        report = one_light_executor.validate(failing)
        repaired = repair(failing, report, one_light_manifest)
        assert one_light_executor.validate(repaired).passed


class TestCreateMissingRule:
    def test_prepends_create_after_header(self, one_light_manifest):
        failing = snippet("#ezcmd v1\nset light.rim.color 0.2 0.2 1.0")
        report = failed_report(Diagnostic(code="missing-reference",
                                          message="missing light 'rim'", location=2))
        repaired = repair(failing, report, one_light_manifest)
        lines = repaired.body.splitlines()
        assert lines[0] == "#ezcmd v1"
        assert lines[1] == "create light rim"

    def test_repaired_script_validates(self, one_light_manifest, one_light_executor):
        failing = snippet("set light.rim.color 0.2 0.2 1.0")
        report = one_light_executor.validate(failing)
        assert report.diagnostics[0].code == "missing-reference"
        repaired = repair(failing, report, one_light_manifest)
        assert one_light_executor.validate(repaired).passed


class TestGatewayFallback:
    def _report(self):
        return failed_report(Diagnostic(code="unknown-identifier",
                                        message="unknown identifier 'qq_zz'"))

    def test_fallback_called_with_debug_role(self, one_light_manifest):
        seen = {}

        def gateway(request):
            seen["role"] = request.role_id
            seen["system"] = request.system_prompt
            return CompletionResponse(text="set light.key.color 0 0 1",
                                      prompt_tokens=5, completion_tokens=5, wall_micros=0)

        repaired = repair(snippet("set qq_zz.ww 1.0"), self._report(),
                          one_light_manifest, gateway=gateway)
        assert seen["role"] == "debug"
        assert seen["system"] == DEBUG_SYSTEM_PROMPT
        assert repaired.body == "set light.key.color 0 0 1"

    def test_identical_gateway_output_is_unrepairable(self, one_light_manifest):
        def gateway(request):
            return CompletionResponse(text="set qq_zz.ww 1.0", prompt_tokens=1,
                                      completion_tokens=1, wall_micros=0)

        with pytest.raises(Unrepairable):
            repair(snippet("set qq_zz.ww 1.0"), self._report(),
                   one_light_manifest, gateway=gateway)

    def test_empty_gateway_output_is_unrepairable(self, one_light_manifest):
        def gateway(request):
            return CompletionResponse(text="  \n", prompt_tokens=1,
                                      completion_tokens=1, wall_micros=0)

        with pytest.raises(Unrepairable):
            repair(snippet("set qq_zz.ww 1.0"), self._report(),
                   one_light_manifest, gateway=gateway)


class TestDeterminism:
    def test_pure_function_of_inputs_randomized_manifests(self):
        rng = random.Random(42)
        pool = ["key", "fill", "rim", "spot", "lamp", "bulb"]
        for _ in range(50):
            names = rng.sample(pool, k=rng.randint(1, 4))
            manifest = manifest_with_names(light=names)
            typo = rng.choice(names)[:-1] + "x"
            failing = snippet(f"set light.{typo}.color 0 0 1")
            report = failed_report(Diagnostic(code="unknown-identifier",
                                              message=f"unknown identifier '{typo}'"))
            try:
                first = repair(failing, report, manifest)
                second = repair(failing, report, manifest)
            except Unrepairable:
                with pytest.raises(Unrepairable):
                    repair(failing, report, manifest)
                continue
            assert first == second

    def test_shared_instance_serves_all_domains(self, one_light_manifest):
        # per-call state only: interleaved domains cannot cross-talk
        for domain in Domain:
            failing = snippet("set shapekey.body.smile 1.7", domain=domain)
            report = failed_report(Diagnostic(
                code="out-of-range",
                message="value 1.7 out of range [0, 1] for shapekey.body.smile",
                location=1))
            repaired = repair(failing, report, one_light_manifest)
            assert repaired.domain is domain
            assert "0.0" in repaired.body


class TestStrategyTable:
    def test_pinned_order_and_ids(self):
        table = strategy_table()
        assert [row["id"] for row in table] == [
            "nearest-name", "default-value", "create-missing"]
        assert [row["order"] for row in table] == [0, 1, 2]
