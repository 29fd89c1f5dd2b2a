"""Embedding-based scoring over a pluggable provider.

The text score is the raw inner product of the provider's image/text
vectors — deliberately not renormalized here, so whether vectors arrive
unit-length is the provider's (recorded) choice.  Visual similarity is the
cosine, clamped only against floating rounding.  Classification is closed-set
top-1, and the task completion rate is an exact mean with failed renders
counting as misses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import (
    DimensionMismatch,
    EmbeddingProviderError,
    EmptyTrialSet,
    ZeroVector,
)
from .model import Domain

COSINE_CLAMP_WINDOW = 1e-9
DEFAULT_DISPLAY_SCALE = 100.0  # reporting-only multiplier for text scores


@dataclass(frozen=True)
class Embedding:
    vector: tuple[float, ...]
    normalized: bool = False

    def __post_init__(self) -> None:
        vec = tuple(float(v) for v in self.vector)
        if not vec:
            raise ValueError("embedding vector must be non-empty")
        for v in vec:
            if not math.isfinite(v):
                raise ValueError("embedding components must be finite")
        object.__setattr__(self, "vector", vec)
        if self.normalized:
            norm = math.sqrt(sum(v * v for v in vec))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"normalized flag set but ||v|| = {norm}")

    @property
    def dim(self) -> int:
        return len(self.vector)


class EmbeddingProvider:
    """Two endpoints: text in, image in, vectors out."""

    def embed_text(self, text: str) -> Embedding:
        raise NotImplementedError

    def embed_image(self, image_key: str) -> Embedding:
        """``image_key`` is the render handle's embedding key (see bench)."""
        raise NotImplementedError


class LookupEmbeddingProvider(EmbeddingProvider):
    """Exact-fixture provider: every key maps to a hand-written vector, so
    each classification test has a checkable oracle."""

    def __init__(self, text_vectors: Mapping[str, Sequence[float]],
                 image_vectors: Mapping[str, Sequence[float]],
                 normalized: bool = False):
        self._text = {k: Embedding(tuple(v), normalized) for k, v in text_vectors.items()}
        self._image = {k: Embedding(tuple(v), normalized) for k, v in image_vectors.items()}

    def embed_text(self, text: str) -> Embedding:
        if text not in self._text:
            raise EmbeddingProviderError(f"no text fixture for {text!r}")
        return self._text[text]

    def embed_image(self, image_key: str) -> Embedding:
        if image_key not in self._image:
            raise EmbeddingProviderError(f"no image fixture for {image_key!r}")
        return self._image[image_key]


class FailingEmbeddingProvider(EmbeddingProvider):
    """Error-injecting test double."""

    def __init__(self, message: str = "embedding backend down"):
        self.message = message

    def embed_text(self, text: str) -> Embedding:
        raise EmbeddingProviderError(self.message)

    def embed_image(self, image_key: str) -> Embedding:
        raise EmbeddingProviderError(self.message)


class HttpEmbeddingProvider(EmbeddingProvider):
    """Client for the sidecar HTTP contract:
    POST /embed_text {"text": ...} and POST /embed_image (binary body)."""

    def __init__(self, base_url: str, timeout_s: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def _parse(self, data: dict) -> Embedding:
        try:
            return Embedding(tuple(data["vector"]), bool(data.get("normalized", False)))
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbeddingProviderError(f"malformed embedding payload: {exc}") from exc

    def embed_text(self, text: str) -> Embedding:
        import requests

        try:
            resp = requests.post(f"{self.base_url}/embed_text", json={"text": text},
                                 timeout=self.timeout_s)
            resp.raise_for_status()
        except Exception as exc:
            raise EmbeddingProviderError(f"embed_text failed: {exc}") from exc
        return self._parse(resp.json())

    def embed_image(self, image_key: str, data: Optional[bytes] = None,
                    media_type: str = "image/png") -> Embedding:
        import requests

        if data is None:
            raise EmbeddingProviderError("HTTP provider needs raw image bytes")
        try:
            resp = requests.post(f"{self.base_url}/embed_image", data=data,
                                 headers={"Content-Type": media_type},
                                 timeout=self.timeout_s)
            resp.raise_for_status()
        except Exception as exc:
            raise EmbeddingProviderError(f"embed_image failed: {exc}") from exc
        return self._parse(resp.json())


# --- scores ---------------------------------------------------------------------


def clip_text_score(image_emb: Embedding, text_emb: Embedding) -> float:
    """Raw inner product of the provider-supplied vectors; no renormalization."""
    if image_emb.dim != text_emb.dim:
        raise DimensionMismatch(f"dims differ: {image_emb.dim} vs {text_emb.dim}")
    return sum(a * b for a, b in zip(image_emb.vector, text_emb.vector))


def clip_visual_sim(emb_a: Embedding, emb_b: Embedding) -> float:
    """Cosine similarity in [-1, 1]; clamped only against float rounding."""
    if emb_a.dim != emb_b.dim:
        raise DimensionMismatch(f"dims differ: {emb_a.dim} vs {emb_b.dim}")
    norm_a = math.sqrt(sum(v * v for v in emb_a.vector))
    norm_b = math.sqrt(sum(v * v for v in emb_b.vector))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    cosine = sum(a * b for a, b in zip(emb_a.vector, emb_b.vector)) / (norm_a * norm_b)
    if 1.0 < cosine <= 1.0 + COSINE_CLAMP_WINDOW:
        return 1.0
    if -1.0 - COSINE_CLAMP_WINDOW <= cosine < -1.0:
        return -1.0
    return cosine


@dataclass(frozen=True)
class SubTaskSpec:
    domain: Domain
    target_label: str
    candidate_labels: tuple[str, ...]
    render_key: str  # embedding key of the diagnostic render

    def __post_init__(self) -> None:
        if len(self.candidate_labels) < 2:
            raise ValueError("classification needs at least 2 candidate labels")
        if self.target_label not in self.candidate_labels:
            raise ValueError("target label must be among the candidates")


def classify(image_key: str, spec: SubTaskSpec, provider: EmbeddingProvider) -> str:
    """Closed-set top-1: argmax of the text score over the candidate list;
    ties break to the lowest candidate index."""
    image_emb = provider.embed_image(image_key)
    best_label = spec.candidate_labels[0]
    best_score = -math.inf
    for label in spec.candidate_labels:
        score = clip_text_score(image_emb, provider.embed_text(label))
        if score > best_score:
            best_score = score
            best_label = label
    return best_label


@dataclass(frozen=True)
class SubTaskOutcome:
    domain: Domain
    target_label: str
    predicted_label: Optional[str]
    correct: bool
    render_failed: bool = False
    score: Optional[float] = None

    @property
    def hit(self) -> int:
        # a failed render is a miss regardless of any would-be prediction
        return 1 if self.correct and not self.render_failed else 0

    def to_dict(self) -> dict:
        return {"domain": self.domain.value, "target_label": self.target_label,
                "predicted_label": self.predicted_label, "correct": self.correct,
                "render_failed": self.render_failed, "score": self.score}


def tcr(outcomes: "Sequence[SubTaskOutcome | int | bool]") -> float:
    """Exact mean of 0/1 sub-task outcomes; failed renders score 0."""
    if len(outcomes) == 0:
        raise EmptyTrialSet("task completion rate over zero sub-tasks is undefined")
    hits = 0
    for outcome in outcomes:
        if isinstance(outcome, SubTaskOutcome):
            hits += outcome.hit
        else:
            hits += 1 if outcome else 0
    return hits / len(outcomes)


@dataclass(frozen=True)
class TrialResult:
    episode_id: str
    trial_index: int
    outcomes: tuple[SubTaskOutcome, ...]
    usage: Mapping = field(default_factory=dict)
    latency: Mapping = field(default_factory=dict)

    @property
    def trial_tcr(self) -> float:
        return tcr(self.outcomes)

    def to_dict(self) -> dict:
        return {"episode_id": self.episode_id, "trial_index": self.trial_index,
                "outcomes": [o.to_dict() for o in self.outcomes],
                "tcr": self.trial_tcr,
                "usage": dict(self.usage), "latency": dict(self.latency)}
