"""Access to packaged data files (templates, golden schemas)."""

from __future__ import annotations

import json
from importlib import resources


def data_text(relpath: str) -> str:
    return (resources.files("ezblender") / "data" / relpath).read_text(encoding="utf-8")


def data_json(relpath: str) -> dict:
    return json.loads(data_text(relpath))


def validator_codes() -> list[str]:
    return data_json("diagnostic_codes.json")["validator_codes"]
