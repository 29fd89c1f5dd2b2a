"""Operator entry points.

Subcommands: ``edit``, ``bench run``, ``bench report``, ``mock-exec``,
``debug strategies list``.  Exit codes: 0 success, 2 config/parse error,
3 provider error, 4 executor error, 5 partial or failed outcome.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as benchmod
from . import figures as figmod
from .config import RunConfig, load_config
from .debug_agent import strategy_table
from .errors import ConfigError, EzBlenderError, ExecutorError, GatewayError
from .gateway import format_cost
from .model import LatencyLedger, UsageLedger
from .planner import make_intent
from .protocol import DEFAULT_PORT, ProtocolServer, serve_stdio
from .report import format_latency_row, report_json, report_text
from .simscene import MockExecutor, SimScene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_EXECUTOR = 4
EXIT_PARTIAL = 5


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        config = load_config(args.config)
    else:
        config = RunConfig()
    import dataclasses

    overrides = {}
    if getattr(args, "no_reasoning", False):
        overrides["no_reasoning"] = True
    if getattr(args, "no_autonomy", False):
        overrides["no_autonomy"] = True
    if getattr(args, "sequential", False):
        overrides["sequential"] = True
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return dataclasses.replace(config, **overrides) if overrides else config


def cmd_edit(args) -> int:
    config = _load_run_config(args)
    executor = benchmod.build_executor(config)
    runner = benchmod.build_runner(config, executor)
    report = runner.run_session(make_intent(args.prompt))

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "session.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")

    for result in report.outcome.results:
        print(f"{result.domain.value:<6} {result.status:<10} "
              f"validations={len(result.reports)} repairs={result.debug_calls} "
              f"applied={'yes' if result.applied else 'no'}")
    latency = LatencyLedger.from_dict(report.latency.to_dict())
    print(f"latency (LLM / Render / Other / Total s): {format_latency_row(latency)}")
    usage = report.usage
    print(f"tokens: prompt={usage['prompt_tokens']} completion={usage['completion_tokens']} "
          f"total={usage['prompt_tokens'] + usage['completion_tokens']}")
    try:
        cost = format_cost(_ledger_from_usage(usage), config.provider.price_table,
                           config.provider.model_id)
        print(f"est. cost ($): {cost}")
    except EzBlenderError:
        pass
    print(f"session report: {out_dir / 'session.json'}")

    if report.outcome.status == "all-succeeded":
        return EXIT_OK
    for result in report.outcome.results:
        if result.status == "failed" and result.reports:
            last = result.reports[-1]
            for diag in last.diagnostics[:1]:
                print(f"{result.domain.value}: [{diag.code}] {diag.message}",
                      file=sys.stderr)
    return EXIT_PARTIAL


def _ledger_from_usage(usage: dict) -> UsageLedger:
    from .model import CallUsage

    return UsageLedger((CallUsage(role_id="planner",
                                  prompt_tokens=usage["prompt_tokens"],
                                  completion_tokens=usage["completion_tokens"],
                                  wall_micros=0),))


def _write_report_files(report: dict, out_dir: Path, figures: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report_json(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(report_text(report), encoding="utf-8")
    if figures:
        figmod.render_all(report, out_dir / "figures")


def cmd_bench_run(args) -> int:
    config = _load_run_config(args)
    spec = benchmod.load_benchmark(args.episodes)
    report = benchmod.run_benchmark(spec, config, seed=args.seed)
    out_dir = Path(config.output_dir)
    _write_report_files(report, out_dir, figures=not args.no_figures)
    print(report_text(report))
    print(f"report written to {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_bench_report(args) -> int:
    path = Path(args.report)
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load report {path}: {exc}") from exc
    out_dir = Path(args.out) if args.out else path.parent
    _write_report_files(report, out_dir, figures=not args.no_figures)
    print(report_text(report))
    return EXIT_OK


def cmd_mock_exec(args) -> int:
    scene = SimScene.from_json_file(args.scene) if args.scene else SimScene()
    executor = MockExecutor(scene)
    if args.stdio:
        serve_stdio(executor, sys.stdin.buffer, sys.stdout.buffer)
        return EXIT_OK
    server = ProtocolServer(executor, host=args.host, port=args.port)
    print(f"mock backend serving ezp/1 on {server.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def cmd_debug_strategies_list(_args) -> int:
    for row in strategy_table():
        print(f"{row['order']}. {row['id']}: {row['description']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ezblender",
                                     description="natural-language 3D scene editing engine")
    sub = parser.add_subparsers(dest="command", required=True)

    edit = sub.add_parser("edit", help="run one editing session")
    edit.add_argument("prompt")
    edit.add_argument("--config", help="run configuration document")
    edit.add_argument("--out", help="output directory")
    edit.add_argument("--no-reasoning", action="store_true", dest="no_reasoning",
                      help="skip the planner; fan the raw prompt to all domains")
    edit.add_argument("--no-autonomy", action="store_true", dest="no_autonomy",
                      help="single validation attempt, no repair")
    edit.add_argument("--sequential", action="store_true",
                      help="run domain cycles one after another")
    edit.set_defaults(func=cmd_edit)

    bench = sub.add_parser("bench", help="multi-task benchmark")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    bench_run = bench_sub.add_parser("run", help="run a benchmark file")
    bench_run.add_argument("episodes", help="benchmark episode file (JSON)")
    bench_run.add_argument("--config", help="run configuration document")
    bench_run.add_argument("--seed", type=int, default=0)
    bench_run.add_argument("--out", help="output directory")
    bench_run.add_argument("--no-figures", action="store_true")
    bench_run.add_argument("--no-reasoning", action="store_true", dest="no_reasoning")
    bench_run.add_argument("--no-autonomy", action="store_true", dest="no_autonomy")
    bench_run.add_argument("--sequential", action="store_true")
    bench_run.set_defaults(func=cmd_bench_run)
    bench_report = bench_sub.add_parser("report", help="re-render tables and figures")
    bench_report.add_argument("report", help="existing report.json")
    bench_report.add_argument("--out")
    bench_report.add_argument("--no-figures", action="store_true")
    bench_report.set_defaults(func=cmd_bench_report)

    mock = sub.add_parser("mock-exec", help="serve the mock execution backend")
    mock.add_argument("--host", default="127.0.0.1")
    mock.add_argument("--port", type=int, default=DEFAULT_PORT)
    mock.add_argument("--scene", help="initial scene fixture (JSON)")
    mock.add_argument("--stdio", action="store_true", help="serve over stdio instead of TCP")
    mock.set_defaults(func=cmd_mock_exec)

    debug = sub.add_parser("debug", help="debug-agent introspection")
    debug_sub = debug.add_subparsers(dest="debug_command", required=True)
    strategies = debug_sub.add_parser("strategies")
    strategies_sub = strategies.add_subparsers(dest="strategies_command", required=True)
    strategies_list = strategies_sub.add_parser("list")
    strategies_list.set_defaults(func=cmd_debug_strategies_list)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GatewayError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except ExecutorError as exc:
        print(f"executor error: {exc}", file=sys.stderr)
        return EXIT_EXECUTOR
    except EzBlenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
