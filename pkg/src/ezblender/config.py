"""Run configuration and the ``ezblender.toml``-style document it loads from.

The document grammar (the full set — nothing else is accepted):

    # comment lines and blank lines are ignored
    [section.subsection]        a header prefixes following keys
    key = "string"              double-quoted, backslash escapes \\ \" \n \t
    key = 123                   integer
    key = 1.5                   float
    key = true | false          boolean
    key = [v, v, ...]           flat list of the scalar forms above

Keys flatten to dotted paths (``[provider]`` + ``model`` -> ``provider.model``).
Loading then dumping a document is idempotent.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ConfigError
from .gateway import PriceEntry, ProviderConfig
from .model import ALL_DOMAINS, Domain
from .subagents import (
    DEFAULT_REFINE_BUDGET,
    DEFAULT_SUBAGENT_TEMPLATE,
    DEFAULT_TEMPERATURES,
    SubAgentProfile,
)

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_.-]+)\s*=\s*(.+)$")

# Prices that reproduce the reference cost figures for the default model.
DEFAULT_PRICE_TABLE = {
    "gpt-4o": PriceEntry(prompt_per_1k=0.0025, completion_per_1k=0.01),
}


def _parse_scalar(token: str, line_no: int) -> Any:
    token = token.strip()
    if token == "true":
        return True
    if token == "false":
        return False
    if token.startswith('"'):
        if not token.endswith('"') or len(token) < 2:
            raise ConfigError(f"line {line_no}: unterminated string {token!r}")
        body = token[1:-1]
        out = []
        i = 0
        while i < len(body):
            ch = body[i]
            if ch == "\\":
                if i + 1 >= len(body):
                    raise ConfigError(f"line {line_no}: dangling escape")
                nxt = body[i + 1]
                mapping = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}
                if nxt not in mapping:
                    raise ConfigError(f"line {line_no}: unknown escape \\{nxt}")
                out.append(mapping[nxt])
                i += 2
            else:
                out.append(ch)
                i += 1
        return "".join(out)
    try:
        if re.fullmatch(r"[+-]?\d+", token):
            return int(token)
        return float(token)
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse value {token!r}") from None


def _split_list_items(body: str, line_no: int) -> list[str]:
    items, depth, current, in_str = [], 0, "", False
    i = 0
    while i < len(body):
        ch = body[i]
        if in_str:
            current += ch
            if ch == "\\" and i + 1 < len(body):
                current += body[i + 1]
                i += 2
                continue
            if ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
            current += ch
        elif ch == "," and depth == 0:
            items.append(current)
            current = ""
        else:
            current += ch
        i += 1
    if current.strip():
        items.append(current)
    return items


def parse_document(text: str) -> dict[str, Any]:
    """Parse a config document into a flat dotted-key mapping."""
    values: dict[str, Any] = {}
    section = ""
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise ConfigError(f"line {line_no}: expected 'key = value' or '[section]'")
        key, value_text = m.group(1), m.group(2).strip()
        full_key = f"{section}.{key}" if section else key
        if full_key in values:
            raise ConfigError(f"line {line_no}: duplicate key {full_key!r}")
        if value_text.startswith("["):
            if not value_text.endswith("]"):
                raise ConfigError(f"line {line_no}: unterminated list")
            inner = value_text[1:-1].strip()
            items = _split_list_items(inner, line_no) if inner else []
            values[full_key] = [_parse_scalar(item, line_no) for item in items]
        else:
            values[full_key] = _parse_scalar(value_text, line_no)
    return values


def _dump_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        escaped = (value.replace("\\", "\\\\").replace('"', '\\"')
                   .replace("\n", "\\n").replace("\t", "\\t"))
        return f'"{escaped}"'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_document(values: Mapping[str, Any]) -> str:
    """Serialize a flat mapping back to the document grammar (sorted, grouped)."""
    grouped: dict[str, dict[str, Any]] = {}
    for full_key in sorted(values):
        section, _, key = full_key.rpartition(".")
        grouped.setdefault(section, {})[key] = values[full_key]
    lines = []
    for section in sorted(grouped):
        if section:
            lines.append(f"[{section}]")
        for key, value in grouped[section].items():
            if isinstance(value, list):
                rendered = ", ".join(_dump_scalar(v) for v in value)
                lines.append(f"{key} = [{rendered}]")
            else:
                lines.append(f"{key} = {_dump_scalar(value)}")
        lines.append("")
    return "\n".join(lines)


@dataclass(frozen=True)
class RunConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    backend_kind: str = "mock"  # "mock" | "bridge"
    bridge_endpoint: str = ""
    scene_path: Optional[str] = None
    render_cost_micros: int = 50_000
    profiles: Mapping[Domain, SubAgentProfile] = field(default_factory=dict)
    planner_template: Optional[str] = None  # template text, already loaded
    no_reasoning: bool = False
    no_autonomy: bool = False
    sequential: bool = False
    measure_overhead: bool = False
    evaluate: bool = False
    display_scale: float = 100.0
    average_views: bool = False
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.backend_kind not in ("mock", "bridge"):
            raise ConfigError(f"backend kind must be 'mock' or 'bridge', "
                              f"got {self.backend_kind!r}")
        if self.backend_kind == "bridge" and not self.bridge_endpoint:
            raise ConfigError("bridge backend requires an endpoint (host:port)")
        if self.backend_kind == "mock" and self.bridge_endpoint:
            raise ConfigError("exactly one backend: drop the bridge endpoint "
                              "or set backend kind to 'bridge'")


def _read_template(path_text: str, base: Path, what: str) -> str:
    path = Path(path_text)
    if not path.is_absolute():
        path = base / path
    if not path.is_file():
        raise ConfigError(f"{what} template does not exist: {path}")
    return path.read_text(encoding="utf-8")


def load_config(path: "str | Path") -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_values(parse_document(text), base=path.parent)


def config_from_values(values: Mapping[str, Any], base: Path = Path(".")) -> RunConfig:
    price_table: dict[str, PriceEntry] = dict(DEFAULT_PRICE_TABLE)
    for key, value in values.items():
        if key.startswith("provider.prices."):
            model = key[len("provider.prices."):]
            if not isinstance(value, list) or len(value) != 2:
                raise ConfigError(f"{key}: expected [prompt_per_1k, completion_per_1k]")
            price_table[model] = PriceEntry(float(value[0]), float(value[1]))

    transcript = values.get("provider.transcript")
    if transcript is not None:
        transcript_path = Path(str(transcript))
        if not transcript_path.is_absolute():
            transcript_path = base / transcript_path
        transcript = str(transcript_path)

    provider = ProviderConfig(
        kind=str(values.get("provider.kind", "replay")),
        endpoint=str(values.get("provider.endpoint", "")),
        credentials_env=str(values.get("provider.credentials_env", "EZBLENDER_API_KEY")),
        transcript_path=transcript,
        model_id=str(values.get("provider.model", "gpt-4o")),
        price_table=price_table,
        artificial_delay_ms=float(values.get("provider.artificial_delay_ms", 0.0)),
        token_ceiling=int(values.get("provider.token_ceiling", 200_000)),
    )

    profiles: dict[Domain, SubAgentProfile] = {}
    for domain in ALL_DOMAINS:
        prefix = f"subagent.{domain.value}."
        template = DEFAULT_SUBAGENT_TEMPLATE
        if prefix + "template" in values:
            template = _read_template(str(values[prefix + "template"]), base,
                                      f"subagent.{domain.value}")
        profiles[domain] = SubAgentProfile(
            domain=domain,
            system_prompt=template,
            temperature=float(values.get(prefix + "temperature",
                                         DEFAULT_TEMPERATURES[domain])),
            refine_budget=int(values.get(prefix + "refine_budget", DEFAULT_REFINE_BUDGET)),
        )

    planner_template = None
    if "planner.template" in values:
        planner_template = _read_template(str(values["planner.template"]), base, "planner")

    scene = values.get("backend.scene")
    if scene is not None:
        scene_path = Path(str(scene))
        if not scene_path.is_absolute():
            scene_path = base / scene_path
        scene = str(scene_path)

    return RunConfig(
        provider=provider,
        backend_kind=str(values.get("backend.kind", "mock")),
        bridge_endpoint=str(values.get("backend.endpoint", "")),
        scene_path=scene,
        render_cost_micros=int(values.get("backend.render_cost_micros", 50_000)),
        profiles=profiles,
        planner_template=planner_template,
        no_reasoning=bool(values.get("run.no_reasoning", False)),
        no_autonomy=bool(values.get("run.no_autonomy", False)),
        sequential=bool(values.get("run.sequential", False)),
        measure_overhead=bool(values.get("run.measure_overhead", False)),
        evaluate=bool(values.get("evaluation.enabled", False)),
        display_scale=float(values.get("evaluation.display_scale", 100.0)),
        average_views=bool(values.get("evaluation.average_views", False)),
        output_dir=str(values.get("output.dir", "out")),
    )
