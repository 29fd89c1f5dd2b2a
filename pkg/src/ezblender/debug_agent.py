"""Universal repair agent shared by all domain sub-agents.

Turns a failing snippet plus its validation report into a repaired snippet.
Deterministic rule-based strategies run first, in a fixed order with
first-match-wins; a single gateway call is the fallback.  A repair must
always change the snippet — a fixed point is reported as unrepairable so
the refine loop can never spin.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional

from .commands import format_create, format_number
from .errors import Unrepairable
from .gateway import CompletionRequest, CompletionResponse
from .model import CodeSnippet, Diagnostic, ValidationReport
from .simscene import SceneManifest, near_matches

_QUOTED = re.compile(r"'([^']+)'")
_FOR_PATH = re.compile(r"for ([a-z0-9_.]+)\s*$")
_MISSING = re.compile(r"missing (light|object) '([^']+)'")

GatewayFn = Callable[[CompletionRequest], CompletionResponse]

DEBUG_SYSTEM_PROMPT = (
    "You repair small scene-editing scripts. You receive a failing script and "
    "its validator diagnostics. Reply with the corrected script only, no prose."
)


def _replace_identifier(body: str, old: str, new: str) -> str:
    return re.sub(rf"(?<![a-z0-9_]){re.escape(old)}(?![a-z0-9_])", new, body,
                  flags=re.IGNORECASE)


def _nearest_identifier(token: str, manifest: SceneManifest) -> Optional[str]:
    matches = near_matches(token, manifest.identifiers(), max_distance=2)
    return matches[0] if matches else None


def _match_unknown_identifier(diag: Diagnostic, manifest: SceneManifest) -> bool:
    if diag.code != "unknown-identifier":
        return False
    m = _QUOTED.search(diag.message)
    return m is not None and _nearest_identifier(m.group(1), manifest) is not None


def _fix_unknown_identifier(body: str, diag: Diagnostic, manifest: SceneManifest) -> str:
    token = _QUOTED.search(diag.message).group(1)  # matcher guarantees a hit
    replacement = _nearest_identifier(token, manifest)
    return _replace_identifier(body, token, replacement)


def _match_out_of_range(diag: Diagnostic, manifest: SceneManifest) -> bool:
    if diag.code != "out-of-range":
        return False
    m = _FOR_PATH.search(diag.message)
    return m is not None and manifest.entry(m.group(1)) is not None


def _fix_out_of_range(body: str, diag: Diagnostic, manifest: SceneManifest) -> str:
    path = _FOR_PATH.search(diag.message).group(1)
    entry = manifest.entry(path)
    default = entry.default
    if isinstance(default, tuple):
        value_text = " ".join(format_number(float(v)) for v in default)
    else:
        value_text = format_number(float(default))
    lines = body.splitlines()
    if diag.location is None or not 1 <= diag.location <= len(lines):
        return body
    tokens = lines[diag.location - 1].split()
    if len(tokens) >= 3 and tokens[0] == "set":
        lines[diag.location - 1] = f"set {tokens[1]} {value_text}"
    return "\n".join(lines)


def _match_missing_reference(diag: Diagnostic, manifest: SceneManifest) -> bool:
    return diag.code == "missing-reference" and _MISSING.search(diag.message) is not None


def _fix_missing_reference(body: str, diag: Diagnostic, manifest: SceneManifest) -> str:
    category, name = _MISSING.search(diag.message).groups()
    create_line = format_create(category, name)
    lines = body.splitlines()
    insert_at = 1 if lines and lines[0].startswith("#ezcmd") else 0
    lines.insert(insert_at, create_line)
    return "\n".join(lines)


@dataclass(frozen=True)
class RepairStrategy:
    id: str
    description: str
    matcher: Callable[[Diagnostic, SceneManifest], bool]
    action: Callable[[str, Diagnostic, SceneManifest], str]


STRATEGIES: tuple[RepairStrategy, ...] = (
    RepairStrategy(
        id="nearest-name",
        description="unknown identifier: substitute the nearest scene name "
                    "(case-insensitive Levenshtein <= 2, ties by manifest order)",
        matcher=_match_unknown_identifier,
        action=_fix_unknown_identifier,
    ),
    RepairStrategy(
        id="default-value",
        description="out-of-range parameter: replace with the declared default for the path",
        matcher=_match_out_of_range,
        action=_fix_out_of_range,
    ),
    RepairStrategy(
        id="create-missing",
        description="missing object or light: prepend the canonical create command",
        matcher=_match_missing_reference,
        action=_fix_missing_reference,
    ),
)


def strategy_table() -> list[dict]:
    """Introspectable strategy listing for the CLI and for test pinning."""
    return [{"order": i, "id": s.id, "description": s.description}
            for i, s in enumerate(STRATEGIES)]


def repair(snippet: CodeSnippet, report: ValidationReport, manifest: SceneManifest,
           gateway: Optional[GatewayFn] = None) -> CodeSnippet:
    """One repair step: rules first, one gateway call as fallback.

    Precondition: the report is a failure — passing snippets are handled by
    the identity branch upstream and must never reach this call.
    """
    if report.passed:
        raise ValueError("repair precondition violated: report verdict is pass")

    for strategy in STRATEGIES:
        for diag in report.diagnostics:
            if strategy.matcher(diag, manifest):
                new_body = strategy.action(snippet.body, diag, manifest)
                if new_body == snippet.body:
                    raise Unrepairable(
                        f"strategy {strategy.id} produced no change for {diag.code}")
                return snippet.next_generation(new_body)

    if gateway is None:
        raise Unrepairable("no rule matched and no gateway fallback is configured")

    diagnostics_text = "\n".join(
        f"[{d.code}] line {d.location}: {d.message}" for d in report.diagnostics)
    response = gateway(CompletionRequest(
        role_id="debug",
        system_prompt=DEBUG_SYSTEM_PROMPT,
        user_payload=f"script:\n{snippet.body}\n\ndiagnostics:\n{diagnostics_text}",
        temperature=0.0,
    ))
    new_body = response.text.strip("\n")
    if not new_body.strip():
        raise Unrepairable("gateway fallback returned an empty script")
    if new_body == snippet.body:
        raise Unrepairable("gateway fallback returned the script unchanged")
    return snippet.next_generation(new_body)
