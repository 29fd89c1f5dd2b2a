from __future__ import annotations

import json

from ezblender.model import Domain, LatencyLedger
from ezblender.report import (
    SCORE_COLUMNS,
    build_report,
    format_latency_row,
    report_json,
    report_text,
)


class TestLatencyRow:
    def test_reference_ledger_renders_expected_row(self):
        ledger = LatencyLedger(llm_micros=20_580_000, render_micros=12_660_000,
                               other_micros=4_110_000)
        assert format_latency_row(ledger) == "20.58 / 12.66 / 4.11 / 37.35"

    def test_zero_ledger(self):
        assert format_latency_row(LatencyLedger()) == "0.00 / 0.00 / 0.00 / 0.00"


class TestScoreColumns:
    def test_paper_style_column_order(self):
        assert [name for name, _ in SCORE_COLUMNS] == [
            "shapekey", "material", "background", "lighting", "camera"]
        assert [d for _, d in SCORE_COLUMNS] == [
            Domain.GEO, Domain.MAT, Domain.BG, Domain.LIGHT, Domain.CAM]


def sample_row():
    return {
        "scenario": "S1",
        "trials": 2,
        "subtasks": 10,
        "hits": 6,
        "scores": {"geo": 0.30, "mat": 0.29, "light": 0.24, "cam": 0.27, "bg": 0.28},
        "llm_micros": 41_160_000,
        "render_micros": 25_320_000,
        "other_micros": 8_220_000,
        "prompt_tokens": 4618,
        "completion_tokens": 1251,
        "est_cost": "0.0241",
    }


class TestBuildReport:
    def test_empty_benchmark_keeps_headers(self):
        report = build_report([])
        assert report["prompt_scores"] == []
        assert report["tcr"] == []
        text = report_text(report)
        for header in ("Shapekey", "Material", "Background", "Lighting", "Camera",
                       "TCR", "LLM / Render / Other / Total", "Est. Cost"):
            assert header in text

    def test_token_row_totals(self):
        report = build_report([sample_row()])
        row = report["tokens"][0]
        assert row["total"] == 5869
        assert row["est_cost"] == "0.0241"

    def test_latency_means_per_trial(self):
        report = build_report([sample_row()])
        row = report["latency"][0]
        assert row["mean_llm_micros"] == 20_580_000
        assert row["mean_render_micros"] == 12_660_000
        assert row["mean_other_micros"] == 4_110_000
        text = report_text(report)
        assert "20.58 / 12.66 / 4.11 / 37.35" in text

    def test_display_scale_applied_to_scores(self):
        report = build_report([sample_row()], display_scale=100.0)
        row = report["prompt_scores"][0]
        assert row["shapekey"] == 30.0
        assert row["lighting"] == 24.0

    def test_json_rendering_is_deterministic(self):
        report = build_report([sample_row()], meta={"seed": 7})
        assert report_json(report) == report_json(json.loads(report_json(report)))

    def test_tcr_percentage_in_text(self):
        text = report_text(build_report([sample_row()]))
        assert "60.00" in text  # 6/10 hits


class TestFigures:
    def test_figures_render_to_files(self, tmp_path):
        from ezblender.figures import render_all

        report = build_report([sample_row()])
        paths = render_all(report, tmp_path)
        assert len(paths) == 3
        for path in paths:
            assert path.exists()
            assert path.stat().st_size > 0
            assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
