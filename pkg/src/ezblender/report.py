"""Report generation: machine-readable JSON, aligned-text tables, and the
fixed row formats the tables use.

Four tables, deterministic column order: per-domain prompt-editing scores,
task completion rate per scenario, the latency split (LLM / Render / Other /
Total), and token usage with estimated cost.
"""

from __future__ import annotations

import json
from typing import Mapping, Optional, Sequence

from .evaluator import DEFAULT_DISPLAY_SCALE
from .model import Domain, LatencyLedger

REPORT_SCHEMA = "ezbench-report/1"

# paper-style column order for the prompt-editing table
SCORE_COLUMNS: tuple[tuple[str, Domain], ...] = (
    ("shapekey", Domain.GEO),
    ("material", Domain.MAT),
    ("background", Domain.BG),
    ("lighting", Domain.LIGHT),
    ("camera", Domain.CAM),
)

LATENCY_COLUMNS = ("llm", "render", "other", "total")
TOKEN_COLUMNS = ("prompt", "completion", "total", "est_cost")


def format_seconds(micros: int) -> str:
    return f"{micros / 1_000_000:.2f}"


def format_latency_row(ledger: LatencyLedger) -> str:
    """Render a ledger as ``LLM / Render / Other / Total`` seconds."""
    return " / ".join(format_seconds(v) for v in (
        ledger.llm_micros, ledger.render_micros, ledger.other_micros, ledger.total()))


def build_report(scenario_rows: Sequence[Mapping],
                 meta: Optional[Mapping] = None,
                 display_scale: float = DEFAULT_DISPLAY_SCALE) -> dict:
    """Assemble the report document from per-scenario aggregates.

    Each scenario row carries: ``scenario``, ``trials``, ``subtasks``,
    ``hits``, per-domain mean raw scores (``scores`` mapping domain tag ->
    float or None), latency bucket totals in micros, and token totals.
    """
    prompt_rows = []
    tcr_rows = []
    latency_rows = []
    token_rows = []
    for row in scenario_rows:
        scores = row.get("scores", {})
        prompt_rows.append({
            "scenario": row["scenario"],
            **{name: (None if scores.get(domain.value) is None
                      else round(scores[domain.value] * display_scale, 4))
               for name, domain in SCORE_COLUMNS},
        })
        subtasks = row.get("subtasks", 0)
        tcr_rows.append({
            "scenario": row["scenario"],
            "subtasks": subtasks,
            "hits": row.get("hits", 0),
            "tcr": (row.get("hits", 0) / subtasks) if subtasks else None,
        })
        trials = max(1, row.get("trials", 1))
        latency_rows.append({
            "scenario": row["scenario"],
            "llm_micros": row.get("llm_micros", 0),
            "render_micros": row.get("render_micros", 0),
            "other_micros": row.get("other_micros", 0),
            "total_micros": (row.get("llm_micros", 0) + row.get("render_micros", 0)
                             + row.get("other_micros", 0)),
            "mean_llm_micros": round(row.get("llm_micros", 0) / trials),
            "mean_render_micros": round(row.get("render_micros", 0) / trials),
            "mean_other_micros": round(row.get("other_micros", 0) / trials),
        })
        token_rows.append({
            "scenario": row["scenario"],
            "prompt": row.get("prompt_tokens", 0),
            "completion": row.get("completion_tokens", 0),
            "total": row.get("prompt_tokens", 0) + row.get("completion_tokens", 0),
            "est_cost": row.get("est_cost"),
        })
    return {
        "schema": REPORT_SCHEMA,
        "meta": dict(meta or {}),
        "display_scale": display_scale,
        "prompt_scores": prompt_rows,
        "tcr": tcr_rows,
        "latency": latency_rows,
        "tokens": token_rows,
    }


def report_json(report: Mapping) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells: list[str]) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows])


def _fmt(value, digits: int = 2) -> str:
    if value is None:
        return "--"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def report_text(report: Mapping) -> str:
    """Aligned-text rendering of the four tables."""
    blocks = []

    headers = ["Scenario"] + [name.capitalize() for name, _ in SCORE_COLUMNS]
    rows = [[r["scenario"]] + [_fmt(r[name]) for name, _ in SCORE_COLUMNS]
            for r in report["prompt_scores"]]
    blocks.append("Prompt Editing (text score x "
                  f"{report.get('display_scale', DEFAULT_DISPLAY_SCALE):g})\n"
                  + _table(headers, rows))

    headers = ["Scenario", "Sub-tasks", "Hits", "TCR (%)"]
    rows = [[r["scenario"], str(r["subtasks"]), str(r["hits"]),
             _fmt(None if r["tcr"] is None else r["tcr"] * 100.0)]
            for r in report["tcr"]]
    blocks.append("Task Completion Rate\n" + _table(headers, rows))

    headers = ["Scenario", "LLM / Render / Other / Total (s, per trial)"]
    rows = []
    for r in report["latency"]:
        ledger = LatencyLedger(llm_micros=r["mean_llm_micros"],
                               render_micros=r["mean_render_micros"],
                               other_micros=r["mean_other_micros"])
        rows.append([r["scenario"], format_latency_row(ledger)])
    blocks.append("Latency\n" + _table(headers, rows))

    headers = ["Scenario", "Prompt", "Completion", "Total", "Est. Cost ($)"]
    rows = [[r["scenario"], str(r["prompt"]), str(r["completion"]), str(r["total"]),
             r["est_cost"] if r["est_cost"] is not None else "--"]
            for r in report["tokens"]]
    blocks.append("Token Usage\n" + _table(headers, rows))

    return "\n\n".join(blocks) + "\n"
