"""Scenario definition and ``.scene.json`` I/O.

File layout::

    {
      "dimension": 2,
      "obstacles": [{"lower": [..], "upper": [..]}, ...],
      "start": [..],
      "target": [..],
      "reference_path": {"waypoints": [[..], ...], "clearance": 0.05, "stretch": 1.0}
    }

``reference_path`` is optional; ``stretch`` inside it is optional bookkeeping.
Serialization is canonical: sorted keys, two-space indent, and Python's
shortest round-trip float repr, so ``load(save(sc)) == sc`` holds exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

from .errors import ContractError, ScenarioParseError, ScenarioValidationError
from .geometry import (
    AxisBox,
    Point,
    Polyline,
    as_point,
    free_volume,
    path_clearance_ok,
    path_cost,
    point_clearance,
)

SCENE_SUFFIX = ".scene.json"
BUNDLED = ("empty_square", "two_boxes", "corridor_3d", "counterexample")


@dataclass(frozen=True)
class Scenario:
    dimension: int
    obstacles: Tuple[AxisBox, ...]
    start: Point
    target: Point
    reference_path: Optional[Polyline] = None
    clearance: Optional[float] = None
    stretch: Optional[float] = None
    name: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "start", as_point(self.start))
        object.__setattr__(self, "target", as_point(self.target))
        validate(self)

    @property
    def free_volume(self) -> float:
        return free_volume(self.dimension, self.obstacles)

    def reference_cost(self) -> float:
        if self.reference_path is None:
            raise ContractError("scenario has no reference path")
        return path_cost(self.reference_path)


def _in_unit_cube(p) -> bool:
    return all(0.0 <= c <= 1.0 for c in p)


def validate(sc: Scenario) -> None:
    """Raise ScenarioValidationError naming the first violated invariant."""
    d = sc.dimension
    if not isinstance(d, int) or isinstance(d, bool) or d < 2:
        raise ScenarioValidationError(f"dimension must be an integer >= 2, got {d!r}")
    for name, p in (("start", sc.start), ("target", sc.target)):
        if len(p) != d:
            raise ScenarioValidationError(f"{name} has dimension {len(p)}, expected {d}")
        if not _in_unit_cube(p):
            raise ScenarioValidationError(f"{name} has coordinates outside [0,1]")
    for i, box in enumerate(sc.obstacles):
        if box.dimension != d:
            raise ScenarioValidationError(f"obstacle {i} has dimension {box.dimension}, expected {d}")
    if not point_clearance(sc.start, sc.obstacles) > 0:
        raise ScenarioValidationError("start not in free space")
    if not point_clearance(sc.target, sc.obstacles) > 0:
        raise ScenarioValidationError("target not in free space")
    if sc.reference_path is None:
        if sc.clearance is not None:
            raise ScenarioValidationError("clearance given without reference_path")
        return
    ref = sc.reference_path
    if sc.clearance is None:
        raise ScenarioValidationError("reference_path present without clearance")
    if not sc.clearance > 0:
        raise ScenarioValidationError("clearance must be positive")
    if sc.stretch is not None and not sc.stretch > 0:
        raise ScenarioValidationError("stretch must be positive")
    if ref.dimension != d:
        raise ScenarioValidationError("reference_path dimension mismatch")
    if any(not _in_unit_cube(p) for p in ref.waypoints):
        raise ScenarioValidationError("reference_path has coordinates outside [0,1]")
    if ref.waypoints[0] != sc.start:
        raise ScenarioValidationError("reference_path must start at start")
    if ref.waypoints[-1] != sc.target:
        raise ScenarioValidationError("reference_path must end at target")
    if not path_clearance_ok(ref, sc.clearance, sc.obstacles):
        raise ScenarioValidationError("reference_path violates its clearance")


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


def _coords(text, value, fld):
    if not isinstance(value, list) or not value:
        raise ScenarioParseError("expected a non-empty list of numbers", fld, _line_of(text, fld.split(".")[0].split("[")[0]))
    out = []
    for c in value:
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise ScenarioParseError(f"non-numeric coordinate {c!r}", fld, _line_of(text, fld.split(".")[0].split("[")[0]))
        out.append(float(c))
    return tuple(out)


def loads(text: str, name: Optional[str] = None) -> Scenario:
    """Parse and validate scenario text."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ScenarioParseError("top level must be a JSON object", line=1)
    for key in ("dimension", "start", "target"):
        if key not in doc:
            raise ScenarioParseError("missing required field", key)
    known = {"dimension", "obstacles", "start", "target", "reference_path"}
    extra = sorted(set(doc) - known)
    if extra:
        raise ScenarioParseError("unknown field", extra[0], _line_of(text, extra[0]))

    dim = doc["dimension"]
    if isinstance(dim, bool) or not isinstance(dim, int):
        raise ScenarioParseError(f"dimension must be an integer, got {dim!r}", "dimension", _line_of(text, "dimension"))

    obstacles = []
    raw_obs = doc.get("obstacles", [])
    if not isinstance(raw_obs, list):
        raise ScenarioParseError("obstacles must be a list", "obstacles", _line_of(text, "obstacles"))
    for i, ob in enumerate(raw_obs):
        fld = f"obstacles[{i}]"
        if not isinstance(ob, dict) or set(ob) != {"lower", "upper"}:
            raise ScenarioParseError("obstacle needs exactly 'lower' and 'upper'", fld, _line_of(text, "obstacles"))
        lo = _coords(text, ob["lower"], fld + ".lower")
        hi = _coords(text, ob["upper"], fld + ".upper")
        try:
            obstacles.append(AxisBox(lo, hi))
        except ContractError as exc:
            raise ScenarioValidationError(f"{fld}: {exc}") from exc

    start = _coords(text, doc["start"], "start")
    target = _coords(text, doc["target"], "target")

    ref = clearance = stretch = None
    if "reference_path" in doc:
        rp = doc["reference_path"]
        if not isinstance(rp, dict) or "waypoints" not in rp:
            raise ScenarioParseError("reference_path needs 'waypoints'", "reference_path", _line_of(text, "reference_path"))
        extra = sorted(set(rp) - {"waypoints", "clearance", "stretch"})
        if extra:
            raise ScenarioParseError("unknown field", "reference_path." + extra[0], _line_of(text, extra[0]))
        wps = rp["waypoints"]
        if not isinstance(wps, list) or not wps:
            raise ScenarioParseError("waypoints must be a non-empty list", "reference_path.waypoints", _line_of(text, "waypoints"))
        try:
            ref = Polyline(tuple(_coords(text, w, f"reference_path.waypoints[{i}]") for i, w in enumerate(wps)))
        except ContractError as exc:
            raise ScenarioValidationError(str(exc)) from exc
        for key in ("clearance", "stretch"):
            v = rp.get(key)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise ScenarioParseError(f"{key} must be a number", "reference_path." + key, _line_of(text, key))
        clearance = None if rp.get("clearance") is None else float(rp["clearance"])
        stretch = None if rp.get("stretch") is None else float(rp["stretch"])

    return Scenario(dim, tuple(obstacles), start, target, ref, clearance, stretch, name=name)


def dumps(sc: Scenario) -> str:
    """Canonical text form of a scenario."""
    doc = {
        "dimension": sc.dimension,
        "obstacles": [{"lower": list(b.lower), "upper": list(b.upper)} for b in sc.obstacles],
        "start": list(sc.start),
        "target": list(sc.target),
    }
    if sc.reference_path is not None:
        rp = {"waypoints": [list(w) for w in sc.reference_path.waypoints], "clearance": sc.clearance}
        if sc.stretch is not None:
            rp["stretch"] = sc.stretch
        doc["reference_path"] = rp
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


load_scenario = loads
save_scenario = dumps


def read_scenario(path) -> Scenario:
    path = Path(path)
    name = path.name[: -len(SCENE_SUFFIX)] if path.name.endswith(SCENE_SUFFIX) else path.stem
    return loads(path.read_text(), name=name)


def write_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps(sc))


def bundled_text(filename: str) -> str:
    return resources.files("rrtlab").joinpath("data", filename).read_text()


def load_bundled(name: str) -> Scenario:
    """Load one of the scenarios shipped in ``rrtlab/data``."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled scenario {name!r}; choose from {', '.join(BUNDLED)}")
    return loads(bundled_text(name + SCENE_SUFFIX), name=name)
