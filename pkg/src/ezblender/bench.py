"""Multi-task benchmark: episode files, seeded prompt generation, scoring.

An episode pairs a scene fixture with five sub-task label sets and a replay
transcript.  Every trial draws one target label per sub-task from a seeded
generator (so ground truth is known by construction), runs a full session,
renders one diagnostic image per sub-task, and scores it with closed-set
classification.  Renders that fail count as misses.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .config import RunConfig
from .errors import EpisodeParseError, RenderFailed
from .evaluator import (
    LookupEmbeddingProvider,
    SubTaskOutcome,
    SubTaskSpec,
    TrialResult,
    classify,
    clip_text_score,
)
from .gateway import GatewaySession, ReplayProvider, estimate_cost, format_cost
from .model import Domain, LatencyLedger, UsageLedger, CallUsage
from .planner import Planner
from .protocol import RemoteExecutor
from .simscene import MockExecutor, SimScene
from .subagents import SessionRunner
from .report import build_report


class TickClock:
    """Deterministic session clock: 0, 1, 2, ... microsecond ticks."""

    def __init__(self) -> None:
        self._tick = -1

    def __call__(self) -> int:
        self._tick += 1
        return self._tick


@dataclass(frozen=True)
class SubTaskDef:
    domain: Domain
    candidates: tuple[str, ...]
    force_render_failure: bool = False

    def __post_init__(self) -> None:
        if len(self.candidates) < 2:
            raise EpisodeParseError(
                f"sub-task for {self.domain.value} needs at least 2 candidate labels")


@dataclass(frozen=True)
class EpisodeSpec:
    id: str
    scenario: str
    scene_path: Path
    transcript_path: Path
    trials: int
    subtasks: tuple[SubTaskDef, ...]
    text_vectors: Mapping[str, Sequence[float]] = field(default_factory=dict)
    image_vectors: Mapping[str, Sequence[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise EpisodeParseError(f"episode {self.id}: trial count must be >= 1")
        domains = [s.domain for s in self.subtasks]
        if len(set(domains)) != len(domains):
            raise EpisodeParseError(
                f"episode {self.id}: sub-task domains must be pairwise distinct")
        for sub in self.subtasks:
            for label in sub.candidates:
                if label not in self.text_vectors:
                    raise EpisodeParseError(
                        f"episode {self.id}: no text embedding fixture for label {label!r}")
            if self.embed_key(sub.domain) not in self.image_vectors:
                raise EpisodeParseError(
                    f"episode {self.id}: no image embedding fixture for "
                    f"{self.embed_key(sub.domain)!r}")

    def embed_key(self, domain: Domain) -> str:
        return f"{self.id}/{domain.value}"

    def provider(self) -> LookupEmbeddingProvider:
        return LookupEmbeddingProvider(self.text_vectors, self.image_vectors)


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    episodes: tuple[EpisodeSpec, ...]


def load_benchmark(path: "str | Path") -> BenchmarkSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise EpisodeParseError(f"cannot read benchmark file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EpisodeParseError(f"benchmark file {path}: {exc.msg}",
                                line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict) or not isinstance(data.get("episodes"), list):
        raise EpisodeParseError(f"benchmark file {path} must carry an 'episodes' array")
    episodes = []
    for i, raw in enumerate(data["episodes"]):
        try:
            subtasks = tuple(
                SubTaskDef(domain=Domain.parse(s["domain"]),
                           candidates=tuple(s["candidates"]),
                           force_render_failure=bool(s.get("force_render_failure", False)))
                for s in raw["subtasks"])
            embeddings = raw.get("embeddings", {})
            episodes.append(EpisodeSpec(
                id=str(raw["id"]),
                scenario=str(raw.get("scenario", raw["id"])),
                scene_path=(path.parent / raw["scene"]).resolve(),
                transcript_path=(path.parent / raw["transcript"]).resolve(),
                trials=int(raw.get("trials", 1)),
                subtasks=subtasks,
                text_vectors={k: tuple(v) for k, v in embeddings.get("text", {}).items()},
                image_vectors={k: tuple(v) for k, v in embeddings.get("image", {}).items()},
            ))
        except EpisodeParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise EpisodeParseError(f"episode {i} is malformed: {exc}") from exc
    return BenchmarkSpec(name=str(data.get("benchmark", path.stem)),
                         episodes=tuple(episodes))


def generate_prompt(rng: random.Random, subtasks: Sequence[SubTaskDef]) -> tuple[str, dict]:
    """Seeded template grammar over the candidate label sets; ground-truth
    labels are known by construction."""
    targets = {sub.domain: rng.choice(sub.candidates) for sub in subtasks}
    parts = [f"{domain.value}: {label}" for domain, label in targets.items()]
    return "Apply these edits simultaneously - " + "; ".join(parts), targets


def build_executor(config: RunConfig, scene: Optional[SimScene] = None):
    if config.backend_kind == "bridge":
        host, _, port = config.bridge_endpoint.partition(":")
        return RemoteExecutor.connect_tcp(host or "127.0.0.1", int(port or 7045))
    if scene is None:
        scene = (SimScene.from_json_file(config.scene_path)
                 if config.scene_path else SimScene())
    return MockExecutor(scene, render_cost_micros=config.render_cost_micros)


def build_runner(config: RunConfig, executor, transcript_path: Optional[Path] = None,
                 clock=None) -> SessionRunner:
    from . import gateway as gw
    from .planner import DEFAULT_PLANNER_TEMPLATE, monotonic_clock

    provider_config = config.provider
    if transcript_path is not None:
        import dataclasses
        provider_config = dataclasses.replace(provider_config,
                                              transcript_path=str(transcript_path))
    provider = gw.build_provider(provider_config)
    session = GatewaySession(provider, provider_config)
    clock = clock if clock is not None else monotonic_clock
    planner = Planner(session, template=config.planner_template or DEFAULT_PLANNER_TEMPLATE,
                      clock=clock)
    return SessionRunner(
        session=session,
        executor=executor,
        profiles=config.profiles or None,
        planner=planner,
        sequential=config.sequential,
        no_reasoning=config.no_reasoning,
        no_autonomy=config.no_autonomy,
        measure_overhead=config.measure_overhead,
        clock=clock,
    )


def run_trial(episode: EpisodeSpec, config: RunConfig, seed: int,
              trial_index: int) -> TrialResult:
    rng = random.Random(seed * 100_003 + trial_index)
    prompt, targets = generate_prompt(rng, episode.subtasks)

    scene = SimScene.from_json_file(episode.scene_path)
    executor = MockExecutor(scene, render_cost_micros=config.render_cost_micros)
    runner = build_runner(config, executor, transcript_path=episode.transcript_path,
                          clock=TickClock())
    from .planner import make_intent

    report = runner.run_session(make_intent(prompt))

    provider = episode.provider()
    outcomes = []
    diag_render_micros = 0
    for sub in episode.subtasks:
        key = episode.embed_key(sub.domain)
        target = targets[sub.domain]
        spec = SubTaskSpec(domain=sub.domain, target_label=target,
                           candidate_labels=sub.candidates, render_key=key)
        try:
            render = executor.render(view_index=0, meta={"embed_key": key},
                                     force_failure=sub.force_render_failure)
            diag_render_micros += render.render_micros
            if config.average_views:
                second = executor.render(view_index=1, meta={"embed_key": key})
                diag_render_micros += second.render_micros
        except RenderFailed:
            outcomes.append(SubTaskOutcome(domain=sub.domain, target_label=target,
                                           predicted_label=None, correct=False,
                                           render_failed=True))
            continue
        predicted = classify(key, spec, provider)
        score = clip_text_score(provider.embed_image(key), provider.embed_text(target))
        outcomes.append(SubTaskOutcome(domain=sub.domain, target_label=target,
                                       predicted_label=predicted,
                                       correct=predicted == target,
                                       score=score))

    latency = report.latency + LatencyLedger(render_micros=diag_render_micros)
    return TrialResult(episode_id=episode.id, trial_index=trial_index,
                       outcomes=tuple(outcomes),
                       usage=report.usage, latency=latency.to_dict())


def run_benchmark(bench: BenchmarkSpec, config: RunConfig, seed: int) -> dict:
    """Run every episode x trial and assemble the report document."""
    scenario_rows: dict[str, dict] = {}
    all_trials: list[TrialResult] = []
    for ep_index, episode in enumerate(bench.episodes):
        row = scenario_rows.setdefault(episode.scenario, {
            "scenario": episode.scenario, "trials": 0, "subtasks": 0, "hits": 0,
            "llm_micros": 0, "render_micros": 0, "other_micros": 0,
            "prompt_tokens": 0, "completion_tokens": 0,
            "_scores": {},
        })
        for trial_index in range(episode.trials):
            trial = run_trial(episode, config, seed + ep_index * 1_009, trial_index)
            all_trials.append(trial)
            row["trials"] += 1
            row["subtasks"] += len(trial.outcomes)
            row["hits"] += sum(o.hit for o in trial.outcomes)
            row["llm_micros"] += trial.latency.get("llm_micros", 0)
            row["render_micros"] += trial.latency.get("render_micros", 0)
            row["other_micros"] += trial.latency.get("other_micros", 0)
            row["prompt_tokens"] += trial.usage.get("prompt_tokens", 0)
            row["completion_tokens"] += trial.usage.get("completion_tokens", 0)
            for outcome in trial.outcomes:
                if outcome.score is not None:
                    row["_scores"].setdefault(outcome.domain.value, []).append(outcome.score)

    rows = []
    for scenario in sorted(scenario_rows):
        row = scenario_rows[scenario]
        trials = max(1, row["trials"])
        scores = {tag: sum(vals) / len(vals) for tag, vals in row.pop("_scores").items()}
        # per-trial means, paper-style row units
        mean_prompt = round(row["prompt_tokens"] / trials)
        mean_completion = round(row["completion_tokens"] / trials)
        mean_ledger = UsageLedger((CallUsage(role_id="planner",
                                             prompt_tokens=mean_prompt,
                                             completion_tokens=mean_completion,
                                             wall_micros=0),))
        try:
            cost = f"{estimate_cost(mean_ledger, config.provider.price_table, config.provider.model_id):.4f}"
        except Exception:
            cost = None
        rows.append({**row, "scores": scores,
                     "prompt_tokens": mean_prompt, "completion_tokens": mean_completion,
                     "est_cost": cost})

    meta = {
        "benchmark": bench.name,
        "seed": seed,
        "episodes": len(bench.episodes),
        "trials": sum(e.trials for e in bench.episodes),
        "provider": config.provider.kind,
        "model": config.provider.model_id,
    }
    return build_report(rows, meta=meta, display_scale=config.display_scale)
