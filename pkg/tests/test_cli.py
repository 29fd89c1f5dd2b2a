from __future__ import annotations

import json

import pytest

from ezblender.cli import (
    EXIT_CONFIG,
    EXIT_EXECUTOR,
    EXIT_OK,
    EXIT_PARTIAL,
    main,
)


def edit_config(fixtures_dir) -> str:
    return str(fixtures_dir / "config" / "edit_blue_light.toml")


class TestEdit:
    def test_replay_fixture_exits_zero_and_writes_report(self, fixtures_dir, tmp_path,
                                                         capsys):
        rc = main(["edit", "turn the light blue",
                   "--config", edit_config(fixtures_dir), "--out", str(tmp_path)])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "light  succeeded" in out
        report = json.loads((tmp_path / "session.json").read_text())
        assert report["outcome"]["status"] == "all-succeeded"

    def test_unreachable_backend_exits_4(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text(
            '[provider]\nkind = "replay"\n'
            'transcript = "t.json"\n'
            '[backend]\nkind = "bridge"\nendpoint = "127.0.0.1:1"\n',
            encoding="utf-8")
        (tmp_path / "t.json").write_text("[]", encoding="utf-8")
        rc = main(["edit", "anything", "--config", str(config), "--out", str(tmp_path)])
        assert rc == EXIT_EXECUTOR

    def test_partial_outcome_exits_5_with_listing(self, fixtures_dir, tmp_path, capsys):
        config = tmp_path / "run.toml"
        config.write_text(
            '[provider]\nkind = "replay"\n'
            f'transcript = "{fixtures_dir / "transcripts" / "never_valid_session.json"}"\n'
            f'[backend]\nkind = "mock"\nscene = "{fixtures_dir / "scenes" / "one_light.json"}"\n',
            encoding="utf-8")
        rc = main(["edit", "impossible edit", "--config", str(config),
                   "--out", str(tmp_path)])
        assert rc == EXIT_PARTIAL
        err = capsys.readouterr().err
        assert "light" in err

    def test_missing_config_file_exits_2(self, tmp_path):
        rc = main(["edit", "x", "--config", str(tmp_path / "nope.toml")])
        assert rc == EXIT_CONFIG


class TestBench:
    def test_malformed_episode_file_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"episodes": [\n  broken\n]}', encoding="utf-8")
        rc = main(["bench", "run", str(bad), "--out", str(tmp_path)])
        assert rc == EXIT_CONFIG
        assert "line" in capsys.readouterr().err

    def test_bench_report_rerenders_from_json(self, tmp_path, capsys):
        from ezblender.report import build_report, report_json

        report = build_report([{"scenario": "S1", "trials": 1, "subtasks": 5, "hits": 4,
                                "scores": {}, "llm_micros": 0, "render_micros": 0,
                                "other_micros": 0, "prompt_tokens": 10,
                                "completion_tokens": 5, "est_cost": None}])
        src = tmp_path / "report.json"
        src.write_text(report_json(report), encoding="utf-8")
        rc = main(["bench", "report", str(src), "--out", str(tmp_path / "re"),
                   "--no-figures"])
        assert rc == EXIT_OK
        assert (tmp_path / "re" / "report.txt").exists()
        assert "80.00" in capsys.readouterr().out  # 4/5 TCR


class TestMockExec:
    def test_bad_scene_fixture_exits_2(self, tmp_path):
        bad = tmp_path / "scene.json"
        bad.write_text('{"lights": {"key": {"color": [9, 9, 9]}}}', encoding="utf-8")
        rc = main(["mock-exec", "--scene", str(bad), "--port", "0"])
        assert rc == EXIT_CONFIG


class TestDebugStrategies:
    def test_list_prints_pinned_table(self, capsys):
        rc = main(["debug", "strategies", "list"])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "nearest-name" in out
        assert "default-value" in out
        assert "create-missing" in out


