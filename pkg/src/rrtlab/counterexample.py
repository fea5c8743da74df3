"""Deterministic replay of the adversarial 23-sample RRT* run.

The fixture has twelve balls ``b1..b12`` laid along a straight corridor from
``s`` (center of ``b1``) to ``t`` (center of ``b12``). The script first
builds a long detour ``s, X1, X2, t``. It then drops samples into the balls
from the ``t`` end backwards, so the tree grows a chain that points the
wrong way. Every consecutive pair of balls ends up holding an earlier
sample in ``b_i`` and a later one in ``b_(i+1)``, yet no index-nondecreasing
selection of one sample per ball exists. RRT* keeps returning the detour.

Sample ``X_0`` is the start ``s`` for the purposes of ball membership, since
``b1`` holds no drawn sample. The replay uses a constant connection radius
equal to the ball diameter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import dist, path_cost
from .planner import PlannerTree, RadiusScheduleSpec, RunTrace, Sampler, rrt_star_run, solution_path
from .prooflab import BallChain
from .scenario import Scenario, bundled_text, loads

SCRIPT_FILE = "counterexample.script.json"
SCENE_FILE = "counterexample.scene.json"
N_SAMPLES = 23
N_BALLS = 12
MIN_DETOUR_RATIO = 1.5


def designated_ball(j: int) -> Optional[int]:
    """1-based ball that sample ``X_j`` must fall in, or None for the detour samples."""
    if j in (1, 2):
        return None
    if j == 3:
        return 12
    if j == 23:
        return 3
    if j % 2 == 0:
        return 13 - j // 2
    return 14 - (j - 1) // 2


# Expected rewires (iteration -> vertex ids rewired to the new vertex).
REWIRES_AT = {22: (18, 20), 23: (16, 18, 19, 21)}


@dataclass(frozen=True)
class CounterexampleFixture:
    scenario: Scenario
    script: Tuple[Tuple[float, ...], ...]
    eta: float
    radius: RadiusScheduleSpec
    balls: BallChain

    @property
    def r(self) -> float:
        return float(self.radius.constant_value)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    """Outcome of replaying a fixture; ``checks`` are in evaluation order."""

    checks: List[Check]
    pair_ok: List[bool] = field(default_factory=list)
    chain_exists: Optional[bool] = None
    path_labels: List[str] = field(default_factory=list)
    path_cost: float = float("nan")
    reference_cost: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def first_failure(self) -> Optional[Check]:
        bad = self.failures
        return bad[0] if bad else None

    @property
    def ratio(self) -> float:
        return self.path_cost / self.reference_cost

    def summary(self) -> str:
        n_ok = sum(self.pair_ok)
        pairs = f"PASS for all {len(self.pair_ok)} pairs" if n_ok == len(self.pair_ok) else f"FAIL ({n_ok}/{len(self.pair_ok)} pairs)"
        chain = "n/a" if self.chain_exists is None else ("PRESENT" if self.chain_exists else "ABSENT")
        path = ",".join(self.path_labels) if self.path_labels else "none"
        return f"(i)&(ii): {pairs}; (iii): {chain}; path: {path}"

    def to_text(self) -> str:
        lines = [self.summary()]
        if self.path_labels:
            lines.append(f"path cost {self.path_cost:.6f} = {self.ratio:.4f} x reference cost {self.reference_cost:.6f}")
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        lines.append("verdict: " + ("PASS" if self.passed else f"FAIL at {self.first_failure.name}"))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "pairs_i_ii": self.pair_ok,
            "monotone_chain_iii": self.chain_exists,
            "path": self.path_labels,
            "path_cost": self.path_cost,
            "reference_cost": self.reference_cost,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "first_failure": None if self.passed else self.first_failure.name,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _sample_points(trace: RunTrace, start=None) -> Tuple[np.ndarray, np.ndarray]:
    """Indexed sample set: ``X_0 = s`` followed by each accepted ``x_new``."""
    if start is None:
        start = trace.x_near[0]
    idx = np.concatenate([[0], np.flatnonzero(trace.accepted) + 1])
    pts = np.vstack([np.asarray(start, dtype=float)[None, :], trace.x_new[trace.accepted]])
    return idx, pts


def ball_members(trace: RunTrace, balls: BallChain, start=None) -> List[List[int]]:
    """Sorted sample indices inside each ball (closed balls)."""
    idx, pts = _sample_points(trace, start)
    out = []
    for c in balls.centers:
        inside = np.sqrt(np.sum((pts - c) ** 2, axis=1)) <= balls.radius
        out.append(sorted(int(i) for i in idx[inside]))
    return out


def chain_exists_from_members(members: Sequence[Sequence[int]]) -> bool:
    """Is there ``j_1 <= ... <= j_M`` with ``j_i`` taken from ``members[i]``?"""
    lo = -1
    for m in members:
        nxt = [j for j in m if j >= lo]
        if not nxt:
            return False
        lo = min(nxt)
    return True


def monotone_chain_exists(trace: RunTrace, balls: BallChain, start=None) -> bool:
    """Condition (iii): an index-nondecreasing choice of one sample per ball.

    Greedy over balls keeps the smallest feasible index, which is optimal
    for every later ball, so this dynamic program is exact.
    """
    return chain_exists_from_members(ball_members(trace, balls, start))


def pairwise_conditions(members: Sequence[Sequence[int]]) -> List[bool]:
    """Conditions (i)+(ii) per consecutive pair: an earlier sample in ``b_i`` than some sample in ``b_(i+1)``."""
    return [bool(a) and bool(b) and min(a) < max(b) for a, b in zip(members, members[1:])]


def _label(v: int) -> str:
    return "s" if v == 0 else f"X{v}"


def replay(fx: CounterexampleFixture, backend: Optional[str] = None) -> Tuple[PlannerTree, RunTrace]:
    return rrt_star_run(fx.scenario, len(fx.script), fx.eta, fx.radius, Sampler.scripted(fx.script), backend=backend)


def _invariant_checks(fx: CounterexampleFixture) -> List[Check]:
    X = {j + 1: p for j, p in enumerate(fx.script)}
    s, t, r = fx.scenario.start, fx.scenario.target, fx.r
    out = [
        Check("script has 23 samples", len(fx.script) == N_SAMPLES, f"{len(fx.script)} samples"),
        Check("12 balls", fx.balls.M_n == N_BALLS, f"{fx.balls.M_n} balls"),
    ]
    if len(fx.script) != N_SAMPLES:
        return out
    out.append(Check("X3 = t", tuple(X[3]) == tuple(t)))
    out.append(Check("r < |X2 - X3| (edge (X2,X4) never considered)", r < dist(X[2], X[3]), f"r={r:.6g}, |X2-X3|={dist(X[2], X[3]):.6g}"))
    out.append(Check("|s - X22| <= r", dist(s, X[22]) <= r, f"{dist(s, X[22]):.6g}"))
    out.append(Check("|s - X23| <= r", dist(s, X[23]) <= r, f"{dist(s, X[23]):.6g}"))
    bad = [
        f"X{j} not in b{b}"
        for j in range(3, N_SAMPLES + 1)
        if (b := designated_ball(j)) is not None and dist(X[j], fx.balls.waypoints[b - 1]) > fx.balls.radius
    ]
    out.append(Check("every sample in its designated ball", not bad, ", ".join(bad)))
    return out


def verify_fixture(fx: CounterexampleFixture, backend: Optional[str] = None) -> VerificationReport:
    """Replay the script with RRT* and check every milestone of the adversarial run."""
    checks = _invariant_checks(fx)
    rep = VerificationReport(checks, reference_cost=fx.scenario.reference_cost())
    if len(fx.script) != N_SAMPLES or fx.balls.M_n != N_BALLS:
        return rep
    tree, trace = replay(fx, backend)

    moved = [j + 1 for j in range(len(trace)) if not np.array_equal(trace.x_new[j], trace.x_rand[j])]
    checks.append(Check("steering is the identity", not moved, ", ".join(f"X{j}" for j in moved)))
    checks.append(Check("all 23 samples accepted (24 vertices)", len(tree) == N_SAMPLES + 1, f"{len(tree)} vertices"))
    if len(tree) != N_SAMPLES + 1:
        return rep

    members = ball_members(trace, fx.balls)
    rep.pair_ok = pairwise_conditions(members)
    rep.chain_exists = chain_exists_from_members(members)
    bad_pairs = [f"b{i + 1}-b{i + 2}" for i, ok in enumerate(rep.pair_ok) if not ok]
    checks.append(Check("(i)+(ii) hold for all 11 consecutive pairs", not bad_pairs, ", ".join(bad_pairs)))
    checks.append(Check("(iii) monotone chain absent", not rep.chain_exists))

    chosen = trace.chosen_parent
    rewired: Dict[int, List[Tuple[int, int, int]]] = {}
    for it, child, old, new in trace.rewires.tolist():
        rewired.setdefault(it, []).append((child, old, new))

    def parent_check(name, j, want):
        got = int(chosen[j - 1])
        checks.append(Check(name, got == want, f"parent of X{j} is {_label(got)}, expected {_label(want)}"))

    parent_check("edges (s,X1), (X1,X2), (X2,t) built first", 1, 0)
    checks[-1].passed = checks[-1].passed and int(chosen[1]) == 1 and int(chosen[2]) == 2
    parent_check("iteration 4 adds edge (X3,X4)", 4, 3)
    parent_check("iteration 5 adds edge (X4,X5)", 5, 4)
    wrong = [f"X{j}<-{_label(int(chosen[j - 1]))}" for j in range(6, 21, 2) if int(chosen[j - 1]) != j - 2]
    checks.append(Check("backward chain X4 <- X6 <- ... <- X20", not wrong, ", ".join(wrong)))
    parent_check("iteration 22 adds edge (s,X22)", 22, 0)
    parent_check("iteration 23 adds edge (s,X23)", 23, 0)

    early = sorted(it for it in rewired if it < 22)
    checks.append(Check("no rewiring before iteration 22", not early, ", ".join(f"iteration {it}" for it in early)))
    for it, want in REWIRES_AT.items():
        got = tuple(sorted(c for c, _, _ in rewired.get(it, [])))
        ok = got == want and all(new == it for _, _, new in rewired.get(it, []))
        checks.append(
            Check(
                f"iteration {it} rewires exactly {', '.join(f'X{v}' for v in want)}",
                ok,
                "got " + (", ".join(f"X{c}" for c in got) or "none"),
            )
        )
    if 22 in rewired:
        old = {c: o for c, o, _ in rewired[22]}
        ok = old.get(20) == 18 and old.get(18) == 16
        checks.append(Check("iteration 22 removes (X18,X20) and (X16,X18)", ok, f"old parents {old}"))

    # Only rewired vertices may leave the parent they were inserted with.
    last = {}
    for it, child, old, new in trace.rewires.tolist():
        last[child] = new
    drift = [
        v for v in range(1, len(tree)) if int(tree.parent[v]) != last.get(v, int(chosen[v - 1]))
    ]
    checks.append(Check("rewires do not propagate to other vertices", not drift, ", ".join(f"X{v}" for v in drift)))

    sol = solution_path(tree, fx.scenario, fx.r)
    if sol is None:
        checks.append(Check("solution path is s,X1,X2,t", False, "no path"))
        return rep
    poly, cost = sol
    t_id = int(np.flatnonzero(np.all(tree.vertices == np.asarray(fx.scenario.target), axis=1))[0])
    ids = tree.path_ids(t_id)
    rep.path_labels = [_label(v) if v != t_id else "t" for v in ids]
    rep.path_cost = cost
    checks.append(Check("solution path is s,X1,X2,t", rep.path_labels == ["s", "X1", "X2", "t"], ",".join(rep.path_labels)))
    checks.append(Check("returned cost matches its polyline", abs(path_cost(poly) - cost) <= 1e-9, f"{cost!r}"))
    checks.append(
        Check(
            f"returned cost >= {MIN_DETOUR_RATIO} x reference cost",
            cost >= MIN_DETOUR_RATIO * rep.reference_cost,
            f"ratio {rep.ratio:.4f}",
        )
    )
    return rep


def fixture_from_texts(scene_text: str, script_text: str) -> CounterexampleFixture:
    sc = loads(scene_text, name="counterexample")
    doc = json.loads(script_text)
    r = float(doc["radius"])
    balls = doc["balls"]
    chain = BallChain(
        tuple(tuple(float(c) for c in w) for w in balls["centers"]),
        float(balls["radius"]),
        0.0,
        r,
        float("nan"),
    )
    return CounterexampleFixture(
        scenario=sc,
        script=tuple(tuple(float(c) for c in p) for p in doc["samples"]),
        eta=float(doc["eta"]),
        radius=RadiusScheduleSpec("constant", constant_value=r),
        balls=chain,
    )


def script_text(fx: CounterexampleFixture) -> str:
    doc = {
        "eta": fx.eta,
        "radius": fx.r,
        "balls": {"centers": [list(w) for w in fx.balls.waypoints], "radius": fx.balls.radius},
        "samples": [list(p) for p in fx.script],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def build_fixture() -> CounterexampleFixture:
    """The frozen, verified fixture shipped with the package."""
    return fixture_from_texts(bundled_text(SCENE_FILE), bundled_text(SCRIPT_FILE))


def perturb(fx: CounterexampleFixture, magnitude: float, seed: int = 0) -> CounterexampleFixture:
    """Copy of ``fx`` with every scripted sample (except ``t``) shifted by ``magnitude`` in a seeded direction."""
    rng = np.random.Generator(np.random.Philox(seed))
    pts = []
    for j, p in enumerate(fx.script, start=1):
        if j == 3:
            pts.append(p)
            continue
        v = rng.normal(size=len(p))
        v *= magnitude / np.linalg.norm(v)
        pts.append(tuple(float(c) for c in np.clip(np.asarray(p) + v, 0.0, 1.0)))
    return replace(fx, script=tuple(pts))
