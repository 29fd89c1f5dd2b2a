"""Matplotlib figures rendered next to the report files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def latency_figure(report: Mapping, path: Path) -> Path:
    rows = report["latency"]
    scenarios = [r["scenario"] for r in rows]
    llm = [r["mean_llm_micros"] / 1e6 for r in rows]
    render = [r["mean_render_micros"] / 1e6 for r in rows]
    other = [r["mean_other_micros"] / 1e6 for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = range(len(scenarios))
    ax.bar(x, llm, label="LLM")
    ax.bar(x, render, bottom=llm, label="Render")
    bottom = [a + b for a, b in zip(llm, render)]
    ax.bar(x, other, bottom=bottom, label="Other")
    ax.set_xticks(list(x))
    ax.set_xticklabels(scenarios, rotation=20, ha="right")
    ax.set_ylabel("seconds per trial")
    ax.set_title("Latency breakdown")
    ax.legend()
    return _save(fig, path)


def token_figure(report: Mapping, path: Path) -> Path:
    rows = report["tokens"]
    scenarios = [r["scenario"] for r in rows]
    prompt = [r["prompt"] for r in rows]
    completion = [r["completion"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = range(len(scenarios))
    width = 0.4
    ax.bar([i - width / 2 for i in x], prompt, width=width, label="Prompt")
    ax.bar([i + width / 2 for i in x], completion, width=width, label="Completion")
    ax.set_xticks(list(x))
    ax.set_xticklabels(scenarios, rotation=20, ha="right")
    ax.set_ylabel("tokens")
    ax.set_title("Token usage")
    ax.legend()
    return _save(fig, path)


def tcr_figure(report: Mapping, path: Path) -> Path:
    rows = report["tcr"]
    scenarios = [r["scenario"] for r in rows]
    values = [0.0 if r["tcr"] is None else r["tcr"] * 100.0 for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(scenarios)), values)
    ax.set_xticks(range(len(scenarios)))
    ax.set_xticklabels(scenarios, rotation=20, ha="right")
    ax.set_ylabel("TCR (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Task completion rate by scenario")
    return _save(fig, path)


def render_all(report: Mapping, out_dir: "str | Path") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        latency_figure(report, out / "latency_breakdown.png"),
        token_figure(report, out / "token_usage.png"),
        tcr_figure(report, out / "tcr_by_scenario.png"),
    ]
