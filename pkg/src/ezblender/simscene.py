"""In-process mock execution backend: a simulated attribute-level scene,
its manifest, a validator, and a deterministic renderer.

The scene holds no geometry — just the addressable attributes that hard
constraints and generated scripts touch.  Validation and execution share
one simulate-on-a-copy pass, so a script that validates can never fail to
execute against the same state version.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .commands import CommandSyntaxError, CreateCommand, SetCommand, parse_script
from .errors import ConfigError, ExecutorUnreachable, RenderFailed
from .model import (
    CodeSnippet,
    Diagnostic,
    ValidationReport,
    canonical_json,
    failed_report,
    passed_report,
)

# Declared schema per (category, attribute): value type, valid range, default.
# The debug agent's out-of-range rule substitutes these defaults.
PATH_SCHEMA: dict[tuple[str, str], dict[str, Any]] = {
    ("shapekey", "*"): {"type": "unit", "range": (0.0, 1.0), "default": 0.0},
    ("material", "base_color"): {"type": "rgb", "range": (0.0, 1.0), "default": (0.8, 0.8, 0.8)},
    ("material", "metallic"): {"type": "unit", "range": (0.0, 1.0), "default": 0.0},
    ("material", "roughness"): {"type": "unit", "range": (0.0, 1.0), "default": 0.5},
    ("light", "color"): {"type": "rgb", "range": (0.0, 1.0), "default": (1.0, 1.0, 1.0)},
    ("light", "energy"): {"type": "scalar", "range": (0.0, None), "default": 100.0},
    ("world", "background_color"): {"type": "rgb", "range": (0.0, 1.0),
                                    "default": (0.05, 0.05, 0.05)},
    ("world", "volume_color"): {"type": "rgb", "range": (0.0, 1.0), "default": (1.0, 1.0, 1.0)},
    ("camera", "location"): {"type": "vec3", "range": None, "default": (0.0, 0.0, 0.0)},
    ("camera", "rotation"): {"type": "vec3", "range": None, "default": (0.0, 0.0, 0.0)},
    ("camera", "focal_mm"): {"type": "scalar", "range": (1.0, None), "default": 50.0},
}

CATEGORIES = ("shapekey", "material", "light", "world", "volume", "background", "camera")

DEFAULT_RESOLUTION = (512, 512)


def _rgb(value, what: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ValueError(f"{what} must be an RGB triple")
    out = [float(c) for c in value]
    for c in out:
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"{what} channel {c} out of range [0, 1]")
    return out


def _unit(value, what: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{what} value {v} out of range [0, 1]")
    return v


class SimScene:
    """Mutable simulated scene; bounds are enforced on every write."""

    def __init__(self, data: Optional[Mapping[str, Any]] = None):
        data = data or {}
        self.objects: dict[str, dict] = {}
        self.lights: dict[str, dict] = {}
        for name, obj in (data.get("objects") or {}).items():
            self.add_object(name,
                            shapekeys=obj.get("shapekeys") or {},
                            material=obj.get("material") or {})
        for name, light in (data.get("lights") or {}).items():
            self.add_light(name, color=light.get("color", (1.0, 1.0, 1.0)),
                           energy=light.get("energy", 100.0))
        world = data.get("world") or {}
        self.world = {
            "background_color": _rgb(world.get("background_color", (0.05, 0.05, 0.05)),
                                     "world.background_color"),
            "volume_color": (None if world.get("volume_color") is None
                             else _rgb(world["volume_color"], "world.volume_color")),
        }
        camera = data.get("camera") or {}
        self.camera = {
            "location": [float(v) for v in camera.get("location", (0.0, 0.0, 0.0))],
            "rotation": [float(v) for v in camera.get("rotation", (0.0, 0.0, 0.0))],
            "focal_mm": float(camera.get("focal_mm", 50.0)),
        }
        if self.camera["focal_mm"] < 1.0:
            raise ValueError("camera.focal_mm must be >= 1")

    def add_object(self, name: str, shapekeys: Mapping[str, float] = (),
                   material: Optional[Mapping[str, Any]] = None) -> None:
        if name in self.objects:
            raise ValueError(f"duplicate object name {name!r}")
        material = material or {}
        self.objects[name] = {
            "shapekeys": {k: _unit(v, f"shapekey.{name}.{k}")
                          for k, v in dict(shapekeys).items()},
            "material": {
                "base_color": _rgb(material.get("base_color", (0.8, 0.8, 0.8)),
                                   f"material.{name}.base_color"),
                "metallic": _unit(material.get("metallic", 0.0), f"material.{name}.metallic"),
                "roughness": _unit(material.get("roughness", 0.5), f"material.{name}.roughness"),
            },
        }

    def add_light(self, name: str, color=(1.0, 1.0, 1.0), energy: float = 100.0) -> None:
        if name in self.lights:
            raise ValueError(f"duplicate light name {name!r}")
        energy = float(energy)
        if energy < 0:
            raise ValueError(f"light.{name}.energy must be >= 0")
        self.lights[name] = {"color": _rgb(color, f"light.{name}.color"), "energy": energy}

    def to_dict(self) -> dict:
        return {
            "objects": {
                name: {"shapekeys": dict(sorted(obj["shapekeys"].items())),
                       "material": {k: obj["material"][k]
                                    for k in ("base_color", "metallic", "roughness")}}
                for name, obj in sorted(self.objects.items())
            },
            "lights": {name: {"color": light["color"], "energy": light["energy"]}
                       for name, light in sorted(self.lights.items())},
            "world": {"background_color": self.world["background_color"],
                      "volume_color": self.world["volume_color"]},
            "camera": {"location": self.camera["location"],
                       "rotation": self.camera["rotation"],
                       "focal_mm": self.camera["focal_mm"]},
        }

    def state_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()

    @classmethod
    def from_json_file(cls, path: "str | Path") -> "SimScene":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load scene fixture {path}: {exc}") from exc
        try:
            return cls(data)
        except ValueError as exc:
            raise ConfigError(f"invalid scene fixture {path}: {exc}") from exc

    # --- path resolution ----------------------------------------------------

    def _world_path(self, field_name: str) -> "ResolvedPath":
        schema = PATH_SCHEMA[("world", field_name)]
        world = self.world
        return ResolvedPath(f"world.{field_name}", schema,
                            lambda: world[field_name],
                            lambda v: world.__setitem__(field_name, v))

    def lookup(self, path: str):
        """Read the value at a (possibly aliased) path; raises KeyError."""
        resolved = self.resolve(path)
        if resolved is None:
            raise KeyError(path)
        return resolved.get()

    def resolve(self, path: str) -> Optional["ResolvedPath"]:
        """Map a dotted path (concrete or alias) onto a scene attribute.

        Aliases: ``light.<attr>`` / ``material.<attr>`` / ``shapekey.<key>``
        bind to the sole light/object when exactly one exists;
        ``volume.color`` and ``background.color`` bind to the world fields.
        Returns None when the path does not address anything.
        """
        parts = path.split(".")
        category = parts[0]

        if category == "volume" and parts[1:] == ["color"]:
            return self._world_path("volume_color")
        if category == "background" and parts[1:] == ["color"]:
            return self._world_path("background_color")
        if category == "world" and len(parts) == 2:
            if parts[1] in ("background_color", "volume_color"):
                return self._world_path(parts[1])
            return None
        if category == "camera" and len(parts) == 2:
            if parts[1] not in ("location", "rotation", "focal_mm"):
                return None
            schema = PATH_SCHEMA[("camera", parts[1])]
            cam = self.camera
            return ResolvedPath(f"camera.{parts[1]}", schema,
                                lambda: cam[parts[1]],
                                lambda v: cam.__setitem__(parts[1], v))
        if category == "light":
            if len(parts) == 2 and len(self.lights) == 1 and parts[1] in ("color", "energy"):
                (name,) = self.lights
                parts = ["light", name, parts[1]]
            if len(parts) == 3 and parts[1] in self.lights and parts[2] in ("color", "energy"):
                light, attr = self.lights[parts[1]], parts[2]
                schema = PATH_SCHEMA[("light", attr)]
                return ResolvedPath(f"light.{parts[1]}.{attr}", schema,
                                    lambda: light[attr],
                                    lambda v: light.__setitem__(attr, v))
            return None
        if category == "material":
            attrs = ("base_color", "metallic", "roughness")
            if len(parts) == 2 and len(self.objects) == 1 and parts[1] in attrs:
                (name,) = self.objects
                parts = ["material", name, parts[1]]
            if len(parts) == 3 and parts[1] in self.objects and parts[2] in attrs:
                mat, attr = self.objects[parts[1]]["material"], parts[2]
                schema = PATH_SCHEMA[("material", attr)]
                return ResolvedPath(f"material.{parts[1]}.{attr}", schema,
                                    lambda: mat[attr],
                                    lambda v: mat.__setitem__(attr, v))
            return None
        if category == "shapekey":
            if len(parts) == 2 and len(self.objects) == 1:
                (name,) = self.objects
                if parts[1] in self.objects[name]["shapekeys"]:
                    parts = ["shapekey", name, parts[1]]
            if (len(parts) == 3 and parts[1] in self.objects
                    and parts[2] in self.objects[parts[1]]["shapekeys"]):
                keys, key = self.objects[parts[1]]["shapekeys"], parts[2]
                schema = PATH_SCHEMA[("shapekey", "*")]
                return ResolvedPath(f"shapekey.{parts[1]}.{key}", schema,
                                    lambda: keys[key],
                                    lambda v: keys.__setitem__(key, v))
            return None
        return None


@dataclass
class ResolvedPath:
    concrete: str
    schema: dict
    get: Any
    set: Any


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    value_type: str  # unit | rgb | scalar | vec3
    valid_range: Optional[tuple[Optional[float], Optional[float]]]
    default: Any

    def to_dict(self) -> dict:
        rng = None if self.valid_range is None else list(self.valid_range)
        default = list(self.default) if isinstance(self.default, (tuple, list)) else self.default
        return {"path": self.path, "type": self.value_type, "range": rng, "default": default}


@dataclass(frozen=True)
class SceneManifest:
    """Flattened, sorted inventory of every addressable scene path."""

    entries: tuple[ManifestEntry, ...]
    names: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def paths(self) -> list[str]:
        return [e.path for e in self.entries]

    def entry(self, path: str) -> Optional[ManifestEntry]:
        for e in self.entries:
            if e.path == path:
                return e
        return None

    def identifiers(self) -> list[str]:
        """All known identifiers in manifest order, for nearest-name repair.

        Scene content names rank before grammar vocabulary so a typo'd
        object/light name repairs to the scene's name, not a category.
        """
        seen: list[str] = []
        for category in sorted(self.names):
            for name in self.names[category]:
                if name not in seen:
                    seen.append(name)
        for e in self.entries:
            for segment in e.path.split("."):
                if segment not in seen:
                    seen.append(segment)
        for cat in CATEGORIES:
            if cat not in seen:
                seen.append(cat)
        return seen

    def to_dict(self) -> dict:
        return {"paths": [e.to_dict() for e in self.entries],
                "names": {k: list(v) for k, v in sorted(self.names.items())}}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SceneManifest":
        entries = tuple(
            ManifestEntry(path=e["path"], value_type=e["type"],
                          valid_range=None if e.get("range") is None else tuple(e["range"]),
                          default=(tuple(e["default"]) if isinstance(e.get("default"), list)
                                   else e.get("default")))
            for e in data.get("paths", []))
        names = {k: tuple(v) for k, v in data.get("names", {}).items()}
        return cls(entries=entries, names=names)


def build_manifest(scene: SimScene) -> SceneManifest:
    entries: list[ManifestEntry] = []

    def add(path: str, category: str, attr: str) -> None:
        schema = PATH_SCHEMA[(category, attr)]
        entries.append(ManifestEntry(path=path, value_type=schema["type"],
                                     valid_range=schema["range"], default=schema["default"]))

    for name, obj in scene.objects.items():
        for key in obj["shapekeys"]:
            add(f"shapekey.{name}.{key}", "shapekey", "*")
        for attr in ("base_color", "metallic", "roughness"):
            add(f"material.{name}.{attr}", "material", attr)
    for name in scene.lights:
        add(f"light.{name}.color", "light", "color")
        add(f"light.{name}.energy", "light", "energy")
    add("world.background_color", "world", "background_color")
    add("world.volume_color", "world", "volume_color")
    add("camera.location", "camera", "location")
    add("camera.rotation", "camera", "rotation")
    add("camera.focal_mm", "camera", "focal_mm")

    entries.sort(key=lambda e: e.path)
    names = {
        "object": tuple(sorted(scene.objects)),
        "light": tuple(sorted(scene.lights)),
        "shapekey": tuple(sorted({k for o in scene.objects.values() for k in o["shapekeys"]})),
    }
    return SceneManifest(entries=tuple(entries), names=names)


# --- validation ---------------------------------------------------------------


def _levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def near_matches(token: str, candidates: list[str], max_distance: int = 2) -> list[str]:
    """Candidates within a case-insensitive Levenshtein distance, input order kept."""
    low = token.lower()
    return [c for c in candidates if _levenshtein(low, c.lower()) <= max_distance]


def _unknown(token: str, candidates: list[str], line: int) -> Diagnostic:
    listed = ", ".join(candidates[:8])
    suffix = f"; candidates: {listed}" if listed else ""
    return Diagnostic(code="unknown-identifier",
                      message=f"unknown identifier '{token}'{suffix}", location=line)


def _missing(category: str, name: str, line: int) -> Diagnostic:
    return Diagnostic(code="missing-reference",
                      message=f"missing {category} '{name}'", location=line)


def _diagnose_unresolved(scene: SimScene, cmd: SetCommand) -> Diagnostic:
    """Classify why a set path failed to resolve.

    A known category with an absent member name and no near match is a
    missing reference (repairable by a create); everything else is an
    unknown identifier with the closest candidates listed.
    """
    parts = cmd.path.split(".")
    category = parts[0]
    if category not in CATEGORIES:
        cands = near_matches(category, list(CATEGORIES)) or list(CATEGORIES)
        return _unknown(category, cands, cmd.line)
    if category in ("light", "material", "shapekey") and len(parts) >= 3:
        pool = sorted(scene.lights) if category == "light" else sorted(scene.objects)
        member_kind = "light" if category == "light" else "object"
        if parts[1] not in pool:
            near = near_matches(parts[1], pool)
            if near:
                return _unknown(parts[1], near, cmd.line)
            return _missing(member_kind, parts[1], cmd.line)
        # member resolved; the attribute or key must be wrong
        if category == "light":
            attrs = ["color", "energy"]
        elif category == "material":
            attrs = ["base_color", "metallic", "roughness"]
        else:
            attrs = sorted(scene.objects[parts[1]]["shapekeys"])
        return _unknown(parts[2], near_matches(parts[2], attrs) or attrs, cmd.line)
    # two-segment path that did not alias, or malformed depth
    tail = parts[-1]
    return _unknown(tail, near_matches(tail, [e for e in CATEGORIES]), cmd.line)


def _check_values(resolved: ResolvedPath, cmd: SetCommand) -> Optional[Diagnostic]:
    vtype = resolved.schema["type"]
    rng = resolved.schema["range"]
    expected = 3 if vtype in ("rgb", "vec3") else 1
    if len(cmd.values) != expected:
        return Diagnostic(code="syntax",
                          message=f"expected {expected} value(s) for {resolved.concrete}, "
                                  f"got {len(cmd.values)}",
                          location=cmd.line)
    if rng is not None:
        lo, hi = rng
        for v in cmd.values:
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                hi_s = "inf" if hi is None else f"{hi:g}"
                lo_s = f"{lo:g}" if lo is not None else "-inf"
                return Diagnostic(code="out-of-range",
                                  message=f"value {v:g} out of range [{lo_s}, {hi_s}] "
                                          f"for {resolved.concrete}",
                                  location=cmd.line)
    return None


def _apply_script(scene: SimScene, body: str) -> Optional[Diagnostic]:
    """Apply a script to a scene in place; returns the first diagnostic on failure.

    Callers pass a scratch copy: a failure leaves the real scene untouched.
    """
    try:
        commands = parse_script(body)
    except CommandSyntaxError as exc:
        return Diagnostic(code="syntax", message=str(exc), location=exc.line)
    for cmd in commands:
        if isinstance(cmd, CreateCommand):
            if cmd.category == "light":
                if cmd.name not in scene.lights:
                    scene.add_light(cmd.name)
            else:
                if cmd.name not in scene.objects:
                    scene.add_object(cmd.name)
            continue
        resolved = scene.resolve(cmd.path)
        if resolved is None:
            return _diagnose_unresolved(scene, cmd)
        diag = _check_values(resolved, cmd)
        if diag is not None:
            return diag
        if resolved.schema["type"] in ("rgb", "vec3"):
            resolved.set([float(v) for v in cmd.values])
        else:
            resolved.set(float(cmd.values[0]))
    return None


# --- executor -------------------------------------------------------------------


@dataclass(frozen=True)
class RenderResult:
    handle_id: str
    media_type: str
    data: bytes
    render_micros: int
    meta: Mapping[str, str] = field(default_factory=dict)


class ExecutorSession:
    """Interface the orchestrator drives; implemented in-process and over the wire."""

    backend_kind = "mock"

    def validate(self, snippet: CodeSnippet) -> ValidationReport:
        raise NotImplementedError

    def execute(self, snippet: CodeSnippet) -> tuple[ValidationReport, int]:
        raise NotImplementedError

    def render(self, view_index: int = 0, resolution: tuple[int, int] = DEFAULT_RESOLUTION,
               meta: Optional[Mapping[str, str]] = None,
               force_failure: bool = False) -> RenderResult:
        raise NotImplementedError

    def introspect(self) -> SceneManifest:
        raise NotImplementedError

    def close(self) -> None:
        pass


def _render_png(scene_hash: str, view_index: int, resolution: tuple[int, int]) -> bytes:
    """Expand a scene-state hash into a flat-color grid PNG (plumbing only)."""
    from PIL import Image

    digest = hashlib.sha256(f"{scene_hash}/{view_index}/{resolution}".encode()).digest()
    grid = 8
    img = Image.new("RGB", (grid, grid))
    pixels = []
    for i in range(grid * grid):
        r = digest[(3 * i) % len(digest)]
        g = digest[(3 * i + 1) % len(digest)]
        b = digest[(3 * i + 2) % len(digest)]
        pixels.append((r, g, b))
    img.putdata(pixels)
    img = img.resize(resolution, resample=Image.NEAREST)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class MockExecutor(ExecutorSession):
    """Deterministic in-process backend; one mutation lane behind a lock."""

    backend_kind = "mock"

    def __init__(self, scene: Optional[SimScene] = None, render_cost_micros: int = 50_000):
        self._lock = threading.RLock()
        self.scene = scene if scene is not None else SimScene()
        self.state_version = 0
        self.render_cost_micros = render_cost_micros
        self._forced_render_failures = 0
        self._closed = False

    def _check_open(self) -> None:
        if self._closed:
            raise ExecutorUnreachable("executor session is closed")

    def force_render_failures(self, count: int = 1) -> None:
        """Test hook: make the next ``count`` renders fail."""
        with self._lock:
            self._forced_render_failures += count

    def validate(self, snippet: CodeSnippet) -> ValidationReport:
        self._check_open()
        with self._lock:
            scratch = copy.deepcopy(self.scene)
        diag = _apply_script(scratch, snippet.body)
        return passed_report() if diag is None else failed_report(diag)

    def execute(self, snippet: CodeSnippet) -> tuple[ValidationReport, int]:
        self._check_open()
        with self._lock:
            scratch = copy.deepcopy(self.scene)
            diag = _apply_script(scratch, snippet.body)
            if diag is not None:
                return failed_report(diag), self.state_version
            self.scene = scratch
            self.state_version += 1
            return passed_report(), self.state_version

    def render(self, view_index: int = 0, resolution: tuple[int, int] = DEFAULT_RESOLUTION,
               meta: Optional[Mapping[str, str]] = None,
               force_failure: bool = False) -> RenderResult:
        self._check_open()
        if view_index not in (0, 1):
            raise ValueError("view_index must be 0 or 1")
        with self._lock:
            if force_failure or self._forced_render_failures > 0:
                if self._forced_render_failures > 0:
                    self._forced_render_failures -= 1
                raise RenderFailed("render failure forced by test hook")
            scene_hash = self.scene.state_hash()
        data = _render_png(scene_hash, view_index, tuple(resolution))
        handle_id = hashlib.sha256(data).hexdigest()[:16]
        return RenderResult(handle_id=handle_id, media_type="image/png", data=data,
                            render_micros=self.render_cost_micros, meta=dict(meta or {}))

    def introspect(self) -> SceneManifest:
        self._check_open()
        with self._lock:
            return build_manifest(self.scene)

    def close(self) -> None:
        self._closed = True
