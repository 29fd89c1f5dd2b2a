from __future__ import annotations

from pathlib import Path

import pytest

from ezblender.gateway import (
    GatewaySession,
    ProviderConfig,
    ReplayProvider,
    TranscriptTurn,
)
from ezblender.simscene import MockExecutor, SimScene, build_manifest

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def one_light_scene() -> SimScene:
    return SimScene.from_json_file(FIXTURES / "scenes" / "one_light.json")


@pytest.fixture
def one_light_executor(one_light_scene) -> MockExecutor:
    return MockExecutor(one_light_scene, render_cost_micros=0)


@pytest.fixture
def one_light_manifest(one_light_scene):
    return build_manifest(one_light_scene)


def turn(role_id: str, text: str, prompt_tokens: int = 10,
         completion_tokens: int = 5) -> TranscriptTurn:
    return TranscriptTurn(role_id=role_id, text=text, prompt_tokens=prompt_tokens,
                          completion_tokens=completion_tokens)


def make_session(turns, token_ceiling: int = 200_000, artificial_delay_ms: float = 0.0):
    provider = ReplayProvider(list(turns), artificial_delay_ms=artificial_delay_ms)
    config = ProviderConfig(kind="replay", transcript_path="<inline>",
                            token_ceiling=token_ceiling,
                            artificial_delay_ms=artificial_delay_ms)
    return GatewaySession(provider, config), provider
