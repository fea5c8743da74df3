"""Geometric primitives on the unit cube [0, 1]^d.

Points are plain tuples of floats (or anything array-like when passed in).
Obstacles are axis-aligned boxes whose *open* interiors block motion; box
boundaries count as free space, so a segment grazing a face is collision free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ContractError

Point = Tuple[float, ...]

GEOM_TOL = 1e-9


def as_point(x) -> Point:
    return tuple(float(c) for c in x)


@dataclass(frozen=True)
class AxisBox:
    lower: Point
    upper: Point

    def __post_init__(self):
        lo, hi = as_point(self.lower), as_point(self.upper)
        if len(lo) != len(hi):
            raise ContractError("box corners differ in dimension")
        for k, (a, b) in enumerate(zip(lo, hi)):
            if not a < b:
                raise ContractError(f"box lower[{k}]={a} must be < upper[{k}]={b}")
            if a < 0.0 or b > 1.0:
                raise ContractError("box must lie inside the unit cube")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lower, self.upper))

    def contains_open(self, x) -> bool:
        return all(a < c < b for a, c, b in zip(self.lower, x, self.upper))

    def distance(self, x) -> float:
        """Euclidean distance from ``x`` to the closed box (0 inside)."""
        acc = 0.0
        for a, c, b in zip(self.lower, x, self.upper):
            gap = max(a - c, 0.0, c - b)
            acc += gap * gap
        return math.sqrt(acc)


@dataclass(frozen=True)
class Polyline:
    waypoints: Tuple[Point, ...]

    def __post_init__(self):
        pts = tuple(as_point(p) for p in self.waypoints)
        if not pts:
            raise ContractError("polyline needs at least one waypoint")
        d = len(pts[0])
        if any(len(p) != d for p in pts):
            raise ContractError("polyline waypoints differ in dimension")
        object.__setattr__(self, "waypoints", pts)

    @property
    def dimension(self) -> int:
        return len(self.waypoints[0])

    def __len__(self) -> int:
        return len(self.waypoints)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.waypoints, dtype=float)


@dataclass(frozen=True)
class Ball:
    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractError("ball radius must be positive")
        object.__setattr__(self, "center", as_point(self.center))

    def contains(self, x) -> bool:
        return dist(self.center, x) <= self.radius


def _check_dims(x, y):
    if len(x) != len(y):
        raise ContractError(f"dimension mismatch: {len(x)} vs {len(y)}")


def dist(x, y) -> float:
    """Euclidean distance, accumulated coordinate by coordinate.

    The accumulation order is the same one used by the planner kernels, so
    values computed here compare bit-for-bit with costs stored in a tree.
    """
    _check_dims(x, y)
    acc = 0.0
    for a, b in zip(x, y):
        diff = float(a) - float(b)
        acc += diff * diff
    return math.sqrt(acc)


def path_cost(p: Polyline) -> float:
    """Length of a polyline (sum of its segment lengths)."""
    pts = p.waypoints
    return float(sum(dist(pts[i - 1], pts[i]) for i in range(1, len(pts))))


def steer(x_near, x_rand, eta: float) -> Point:
    """Move from ``x_near`` toward ``x_rand`` by at most ``eta``."""
    _check_dims(x_near, x_rand)
    if not eta > 0:
        raise ContractError("eta must be positive")
    d = dist(x_near, x_rand)
    if d <= eta:
        return as_point(x_rand)
    scale = eta / d
    return tuple(float(a) + (float(b) - float(a)) * scale for a, b in zip(x_near, x_rand))


def _segment_hits_box(a, b, lower, upper) -> bool:
    # Parametric clipping against the open box; the segment parameter lives in
    # the closed interval [0, 1].
    t_lo = -math.inf
    t_hi = math.inf
    for k in range(len(a)):
        dk = b[k] - a[k]
        if dk == 0.0:
            if not (lower[k] < a[k] < upper[k]):
                return False
            continue
        t1 = (lower[k] - a[k]) / dk
        t2 = (upper[k] - a[k]) / dk
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > t_lo:
            t_lo = t1
        if t2 < t_hi:
            t_hi = t2
        if t_lo >= t_hi:
            return False
    return t_lo < t_hi and t_lo < 1.0 and t_hi > 0.0


def segment_collision_free(a, b, obstacles: Sequence[AxisBox]) -> bool:
    """True iff the closed segment [a, b] misses every obstacle interior."""
    _check_dims(a, b)
    a = as_point(a)
    b = as_point(b)
    return not any(_segment_hits_box(a, b, box.lower, box.upper) for box in obstacles)


def point_clearance(x, obstacles: Sequence[AxisBox]) -> float:
    """Distance from ``x`` to the nearest obstacle or to the cube boundary."""
    c = min(min(float(v), 1.0 - float(v)) for v in x)
    for box in obstacles:
        if box.contains_open(x):
            return 0.0
        c = min(c, box.distance(x))
    return c


def _clearance_many(pts: np.ndarray, obstacles: Sequence[AxisBox]) -> np.ndarray:
    c = np.minimum(pts, 1.0 - pts).min(axis=1)
    for box in obstacles:
        lo = np.asarray(box.lower)
        hi = np.asarray(box.upper)
        gap = np.maximum(np.maximum(lo - pts, 0.0), pts - hi)
        c = np.minimum(c, np.sqrt((gap * gap).sum(axis=1)))
    return c


def path_clearance_ok(p: Polyline, delta: float, obstacles: Sequence[AxisBox]) -> bool:
    """Check that every point of ``p`` keeps distance ``delta`` from the
    obstacles and from the outside of the unit cube.

    Clearance is evaluated on points spaced at most ``delta/64`` apart along
    each segment. Clearance is 1-Lipschitz, so requiring the sampled minimum to
    exceed ``delta`` by half a step makes the check conservative: a path whose
    true clearance is below ``delta`` is never accepted.
    """
    if not delta > 0:
        raise ContractError("delta must be positive")
    step = delta / 64.0
    need = delta + 0.5 * step
    pts = p.as_array()
    chunks = [pts[:1]]
    for i in range(1, len(pts)):
        a, b = pts[i - 1], pts[i]
        seg = float(np.linalg.norm(b - a))
        k = max(1, math.ceil(seg / step))
        t = np.arange(1, k + 1, dtype=float)[:, None] / k
        chunks.append(a + t * (b - a))
    samples = np.concatenate(chunks)
    return bool(_clearance_many(samples, obstacles).min() >= need)


def unit_ball_volume(d: int) -> float:
    """Lebesgue volume of the unit ball in R^d."""
    if int(d) != d or d < 1:
        raise ContractError("unit_ball_volume needs an integer d >= 1")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def in_free_space(x, obstacles: Sequence[AxisBox]) -> bool:
    if any(float(c) < 0.0 or float(c) > 1.0 for c in x):
        return False
    return not any(box.contains_open(x) for box in obstacles)


def free_volume(d: int, obstacles: Sequence[AxisBox]) -> float:
    """Volume of the unit cube minus the union of the obstacles.

    Uses coordinate compression, so overlapping boxes are counted once.
    """
    if not obstacles:
        return 1.0
    edges = []
    for k in range(d):
        cuts = sorted({0.0, 1.0, *(b.lower[k] for b in obstacles), *(b.upper[k] for b in obstacles)})
        edges.append(np.asarray(cuts))
    mids = np.meshgrid(*[(e[1:] + e[:-1]) / 2 for e in edges], indexing="ij")
    widths = np.meshgrid(*[np.diff(e) for e in edges], indexing="ij")
    cell_vol = np.prod(np.stack(widths), axis=0)
    covered = np.zeros(cell_vol.shape, dtype=bool)
    for box in obstacles:
        inside = np.ones(cell_vol.shape, dtype=bool)
        for k in range(d):
            inside &= (mids[k] > box.lower[k]) & (mids[k] < box.upper[k])
        covered |= inside
    return float(1.0 - cell_vol[covered].sum())
