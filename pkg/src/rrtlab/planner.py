"""RRT and RRT* runs with full per-iteration tracing.

The loops themselves live in the kernels (``_kernels`` compiled with numba, or
the numpy twin); this module wraps them in trees, traces, samplers and radius
schedules.

Conventions that the algorithms leave open:

* ``nearest`` breaks distance ties toward the smallest vertex id.
* ``near`` is the closed ball and returns ids in ascending order; RRT* uses
  the radius evaluated at |V| *before* ``x_new`` is inserted.
* Parent choice starts from the nearest vertex and only switches on a strict
  cost improvement, scanning neighbours by ascending id, so among equally
  cheap improvements the smallest id wins.
* Rewiring re-parents only the neighbour itself; its descendants keep their
  parents and just get their cached cost-to-come refreshed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import _backend
from ._kernels import KIND_CONSTANT, KIND_CORRECTED, KIND_ORIGINAL, radius_at
from .errors import ContractError, RunError
from .geometry import Polyline, dist, in_free_space, segment_collision_free, unit_ball_volume
from .scenario import Scenario

SCHEDULE_KINDS = {"original_kf": KIND_ORIGINAL, "corrected": KIND_CORRECTED, "constant": KIND_CONSTANT}
SCHEDULE_ALIASES = {"kf": "original_kf", "const": "constant"}


@dataclass(frozen=True)
class RadiusScheduleSpec:
    kind: str
    gamma: float = 1.0
    constant_value: Optional[float] = None

    def __post_init__(self):
        kind = SCHEDULE_ALIASES.get(self.kind, self.kind)
        if kind not in SCHEDULE_KINDS:
            raise ContractError(f"unknown radius schedule {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "constant":
            if self.constant_value is None or not self.constant_value > 0:
                raise ContractError("constant schedule requires a positive constant_value")
        elif not self.gamma > 0:
            raise ContractError("gamma must be positive")

    @property
    def code(self) -> int:
        return SCHEDULE_KINDS[self.kind]

    @property
    def short_name(self) -> str:
        return {"original_kf": "kf", "corrected": "corrected", "constant": "const"}[self.kind]


def radius_value(spec: RadiusScheduleSpec, n: int, d: int) -> float:
    """r(n) for the schedule: gamma*(log n/n)^(1/d), ^(1/(d+1)), or a constant."""
    if n < 1:
        raise ContractError("n must be >= 1")
    if d < 2:
        raise ContractError("d must be >= 2")
    return radius_at(spec.code, float(spec.gamma), float(spec.constant_value or 0.0), int(n), int(d))


def gamma_lower_bound(eps, theta, mu, d, c_star, free_volume) -> float:
    """Smallest gamma admitted by the corrected-radius optimality theorem."""
    if not 0 < eps < 1:
        raise ContractError("eps must lie in (0, 1)")
    if not 0 < theta < 0.25:
        raise ContractError("theta must lie in (0, 1/4)")
    if not 0 < mu < 1:
        raise ContractError("mu must lie in (0, 1)")
    if int(d) != d or d < 2:
        raise ContractError("d must be an integer >= 2")
    if not c_star > 0 or not free_volume > 0:
        raise ContractError("c_star and free_volume must be positive")
    inner = (1 + eps / 4) * c_star / ((d + 1) * theta * (1 - mu)) * free_volume / unit_ball_volume(d)
    return (2 + theta) * inner ** (1.0 / (d + 1))


@dataclass
class PlannerTree:
    """Tree G=(V,E) stored column-wise; vertex ids follow insertion order."""

    vertices: np.ndarray
    parent: np.ndarray
    cost: np.ndarray
    vertex_iteration: np.ndarray

    def __len__(self) -> int:
        return self.vertices.shape[0]

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    def point(self, v: int) -> Tuple[float, ...]:
        return tuple(self.vertices[v].tolist())

    def path_ids(self, v: int) -> List[int]:
        ids = [int(v)]
        while self.parent[ids[-1]] >= 0:
            ids.append(int(self.parent[ids[-1]]))
            if len(ids) > len(self):
                raise RuntimeError("parent links contain a cycle")
        return ids[::-1]

    def path(self, v: int) -> Polyline:
        return Polyline(tuple(self.point(i) for i in self.path_ids(v)))

    def recomputed_costs(self) -> np.ndarray:
        """Cost-to-come recomputed from the parent links alone."""
        out = np.full(len(self), np.nan)
        out[0] = 0.0
        order = np.argsort(self._depths(), kind="stable")
        for v in order[1:]:
            p = self.parent[v]
            out[v] = out[p] + dist(self.vertices[p], self.vertices[v])
        return out

    def _depths(self) -> np.ndarray:
        depth = np.full(len(self), -1, dtype=np.int64)
        depth[0] = 0
        for v in range(1, len(self)):
            chain = []
            u = v
            while depth[u] < 0:
                chain.append(u)
                u = self.parent[u]
                if u < 0 or len(chain) > len(self):
                    raise RuntimeError("tree is not rooted at vertex 0")
            base = depth[u]
            for k, w in enumerate(reversed(chain), start=1):
                depth[w] = base + k
        return depth

    def check_invariants(self, tol: float = 1e-9) -> None:
        if self.parent[0] != -1 or np.any(self.parent[1:] < 0):
            raise AssertionError("vertex 0 must be the only root")
        rec = self.recomputed_costs()
        bad = np.flatnonzero(np.abs(rec - self.cost) > tol)
        if bad.size:
            raise AssertionError(f"cost_to_come mismatch at vertices {bad[:5].tolist()}")


@dataclass
class RunTrace:
    """Per-iteration record of a run; row ``j-1`` describes iteration ``j``."""

    x_rand: np.ndarray
    near_id: np.ndarray
    x_near: np.ndarray
    x_new: np.ndarray
    accepted: np.ndarray
    chosen_parent: np.ndarray
    radius_used: np.ndarray
    rewires: np.ndarray  # rows: (iteration, child, old_parent, new_parent)

    def __len__(self) -> int:
        return self.x_rand.shape[0]

    @property
    def new_id(self) -> np.ndarray:
        """Vertex id given to ``x_new`` at each iteration, -1 when rejected."""
        return np.where(self.accepted, np.cumsum(self.accepted), -1)

    def rewired_at(self, iteration: int) -> List[Tuple[int, int, int]]:
        rows = self.rewires[self.rewires[:, 0] == iteration]
        return [tuple(int(x) for x in r[1:]) for r in rows]

    def records(self) -> Iterator[dict]:
        by_iter = {}
        for it, child, old, new in self.rewires.tolist():
            by_iter.setdefault(it, []).append([child, old, new])
        for j in range(len(self)):
            acc = bool(self.accepted[j])
            r = float(self.radius_used[j])
            yield {
                "iteration": j + 1,
                "x_rand": self.x_rand[j].tolist(),
                "x_near": self.x_near[j].tolist(),
                "x_new": self.x_new[j].tolist(),
                "accepted": acc,
                "chosen_parent": int(self.chosen_parent[j]) if acc else None,
                "rewired": by_iter.get(j + 1, []),
                "radius_used": None if math.isnan(r) else r,
            }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.records())

    @classmethod
    def from_jsonl(cls, text: str, tree: Optional[PlannerTree] = None) -> "RunTrace":
        recs = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not recs:
            raise ValueError("empty trace")
        x_near = np.array([r["x_near"] for r in recs], dtype=float)
        near_id = np.full(len(recs), -1, dtype=np.int64)
        if tree is not None:
            for j, p in enumerate(x_near):
                near_id[j] = int(np.flatnonzero(np.all(tree.vertices == p, axis=1))[0])
        rewires = [(r["iteration"], *rw) for r in recs for rw in r["rewired"]]
        return cls(
            x_rand=np.array([r["x_rand"] for r in recs], dtype=float),
            near_id=near_id,
            x_near=x_near,
            x_new=np.array([r["x_new"] for r in recs], dtype=float),
            accepted=np.array([r["accepted"] for r in recs], dtype=bool),
            chosen_parent=np.array([-1 if r["chosen_parent"] is None else r["chosen_parent"] for r in recs], dtype=np.int64),
            radius_used=np.array([np.nan if r["radius_used"] is None else r["radius_used"] for r in recs], dtype=float),
            rewires=np.asarray(rewires, dtype=np.int64).reshape(-1, 4),
        )


@dataclass(frozen=True)
class Sampler:
    """Source of ``x_rand``.

    ``uniform_free`` draws from a Philox-4x64 counter-based generator keyed by
    ``seed`` (through numpy's SeedSequence) and rejects points inside
    obstacles; the sequence is the same on every platform. ``scripted`` replays
    ``script`` in order.
    """

    kind: str
    seed: Optional[int] = None
    script: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        if self.kind == "uniform_free":
            if self.seed is None:
                raise ContractError("uniform_free sampler needs a seed")
        elif self.kind == "scripted":
            if self.script is None:
                raise ContractError("scripted sampler needs a script")
            object.__setattr__(self, "script", tuple(tuple(float(c) for c in p) for p in self.script))
        else:
            raise ContractError(f"unknown sampler kind {self.kind!r}")

    @classmethod
    def uniform(cls, seed: int) -> "Sampler":
        return cls("uniform_free", seed=int(seed))

    @classmethod
    def scripted(cls, points: Sequence[Sequence[float]]) -> "Sampler":
        return cls("scripted", script=tuple(points))

    def draw(self, n: int, sc: Scenario) -> np.ndarray:
        d = sc.dimension
        if self.kind == "scripted":
            if len(self.script) < n:
                raise RunError(f"scripted sampler exhausted at iteration {len(self.script) + 1} (script has {len(self.script)} points)")
            pts = np.asarray(self.script[:n], dtype=float).reshape(n, d)
            return pts
        rng = np.random.Generator(np.random.Philox(self.seed))
        lower, upper = obstacle_arrays(sc)
        out = np.empty((n, d))
        filled = 0
        while filled < n:
            batch = rng.random((max(64, 2 * (n - filled)), d))
            if lower.shape[0]:
                blocked = np.zeros(batch.shape[0], dtype=bool)
                for lo, hi in zip(lower, upper):
                    blocked |= np.all((batch > lo) & (batch < hi), axis=1)
                batch = batch[~blocked]
            take = min(n - filled, batch.shape[0])
            out[filled : filled + take] = batch[:take]
            filled += take
        return out


def obstacle_arrays(sc: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    d = sc.dimension
    lower = np.array([b.lower for b in sc.obstacles], dtype=float).reshape(-1, d)
    upper = np.array([b.upper for b in sc.obstacles], dtype=float).reshape(-1, d)
    return lower, upper


def _dists_to(points: np.ndarray, x) -> np.ndarray:
    acc = np.zeros(points.shape[0])
    for k in range(points.shape[1]):
        diff = points[:, k] - float(x[k])
        acc += diff * diff
    return np.sqrt(acc)


def nearest(tree: PlannerTree, x) -> int:
    """Id of the vertex closest to ``x`` (smallest id on ties)."""
    if len(tree) == 0:
        raise ContractError("tree is empty")
    return int(np.argmin(_dists_to(tree.vertices, x)))


def near(tree: PlannerTree, x, r: float) -> List[int]:
    """Ids of all vertices within distance ``r`` of ``x`` (closed ball), ascending."""
    if not r > 0:
        raise ContractError("near radius must be positive")
    return np.flatnonzero(_dists_to(tree.vertices, x) <= r).tolist()


def _run(sc: Scenario, n: int, eta: float, sampler: Sampler, star: bool, schedule, backend):
    if int(n) != n or n < 1:
        raise ContractError("n must be an integer >= 1")
    if not eta > 0:
        raise ContractError("eta must be positive")
    samples = sampler.draw(int(n), sc)
    lower, upper = obstacle_arrays(sc)
    start = np.asarray(sc.start, dtype=float)
    if schedule is None:
        kind, gamma, const = KIND_CONSTANT, 0.0, 0.0
    else:
        kind, gamma, const = schedule.code, float(schedule.gamma), float(schedule.constant_value or 0.0)
    V, parent, cost, vit, near_id, x_new, accepted, chosen, radius_used, rw = _backend.planner_loop(
        samples, start, lower, upper, float(eta), bool(star), kind, gamma, const, backend=backend
    )
    tree = PlannerTree(V, parent, cost, vit)
    trace = RunTrace(
        x_rand=samples,
        near_id=near_id,
        x_near=V[near_id],
        x_new=x_new,
        accepted=accepted,
        chosen_parent=chosen,
        radius_used=radius_used,
        rewires=rw,
    )
    return tree, trace


def rrt_run(sc: Scenario, n: int, eta: float, sampler: Sampler, backend: Optional[str] = None):
    """Run RRT for ``n`` iterations; returns ``(tree, trace)``."""
    return _run(sc, n, eta, sampler, False, None, backend)


def rrt_star_run(
    sc: Scenario,
    n: int,
    eta: float,
    schedule: RadiusScheduleSpec,
    sampler: Sampler,
    backend: Optional[str] = None,
):
    """Run RRT* for ``n`` iterations; returns ``(tree, trace)``."""
    return _run(sc, n, eta, sampler, True, schedule, backend)


def solution_path(tree: PlannerTree, sc: Scenario, connect_radius: float) -> Optional[Tuple[Polyline, float]]:
    """Best path from the root to the target, or None.

    If the target is itself a vertex its tree path is returned. Otherwise the
    target is attached to the vertex minimizing cost + distance among those
    within ``connect_radius`` whose straight segment to the target is free.
    """
    t = np.asarray(sc.target, dtype=float)
    hits = np.flatnonzero(np.all(tree.vertices == t, axis=1))
    if hits.size:
        v = int(hits[0])
        return tree.path(v), float(tree.cost[v])
    if not connect_radius > 0:
        return None
    d = _dists_to(tree.vertices, t)
    cand = np.flatnonzero(d <= connect_radius)
    if cand.size == 0:
        return None
    total = tree.cost[cand] + d[cand]
    for idx in np.argsort(total, kind="stable"):
        v = int(cand[idx])
        if segment_collision_free(tree.vertices[v], t, sc.obstacles):
            poly = Polyline(tuple(tree.point(i) for i in tree.path_ids(v)) + (tuple(sc.target),))
            return poly, float(total[idx])
    return None


def sample_is_free(sc: Scenario, x) -> bool:
    return in_free_space(x, sc.obstacles)
