"""Executable versions of the optimality-proof constructions.

The pieces are: waypoints and covering balls along a robust reference path,
the time windows that assign each ball an epoch of iterations, detectors for
the three events E1/E2/E3, the path assembled from window representatives,
and its worst-case cost bound. ``estimate_event_rates`` runs many seeded
planner trials and reports how often each event holds.

Conventions used throughout:

* Iterations are numbered from 1; ``trace`` row ``j - 1`` is iteration ``j``.
* ``V_i`` is the set of vertices accepted during window ``T_i``. Rejected
  iterations contribute nothing.
* The E1 detector uses the closed range ``n' <= j <= n``. The empirical
  violation fraction used for trend studies uses ``n' < j <= n``.
* Ball membership is closed: ``dist(x, center) <= radius``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ChainError, ContractError, WindowError
from .geometry import Polyline, dist, path_cost, unit_ball_volume
from .planner import (
    PlannerTree,
    RadiusScheduleSpec,
    RunTrace,
    Sampler,
    radius_value,
    rrt_star_run,
    solution_path,
)
from .scenario import Scenario

WILSON_Z = 1.959963984540054  # two-sided 95% normal quantile
EVENT_CSV_COLUMNS = ("seed", "n", "trial", "e1", "e2", "e3", "k_beta", "M_n", "r_n", "cost")


@dataclass(frozen=True)
class ProofParams:
    """Constants of the optimality argument.

    Attributes:
        eps: Target suboptimality, in (0, 1).
        theta: Waypoint spacing factor, in (0, 1/4).
        mu: Fraction of iterations reserved for warm-up, in (0, 1).
        alpha: Allowed fraction of missed shrunken balls, in (0, theta*eps/16).
        beta: Shrink factor of the inner balls, in (0, theta*eps/16).
        eta: Steering step, positive.
        gamma: Radius constant, positive.
    """

    eps: float
    theta: float
    mu: float
    alpha: float
    beta: float
    eta: float
    gamma: float

    def __post_init__(self):
        cap = self.theta * self.eps / 16.0
        checks = (
            ("eps", self.eps, 0.0, 1.0, "(0, 1)"),
            ("theta", self.theta, 0.0, 0.25, "(0, 1/4)"),
            ("mu", self.mu, 0.0, 1.0, "(0, 1)"),
        )
        for name, v, lo, hi, label in checks:
            if not lo < v < hi:
                raise ContractError(f"{name}={v!r} outside the admissible range {label}")
        for name, v in (("alpha", self.alpha), ("beta", self.beta)):
            if not 0.0 < v < cap:
                raise ContractError(f"{name}={v!r} outside the admissible range (0, theta*eps/16) = (0, {cap!r})")
        if not self.eta > 0:
            raise ContractError(f"eta={self.eta!r} must be positive")
        if not self.gamma > 0:
            raise ContractError(f"gamma={self.gamma!r} must be positive")

    @classmethod
    def standard(cls, eps=0.5, theta=0.2, mu=0.5, eta=0.5, gamma=1.0, alpha=None, beta=None) -> "ProofParams":
        """Params with ``alpha = beta = theta*eps/32`` unless given."""
        half = theta * eps / 32.0
        return cls(eps, theta, mu, half if alpha is None else alpha, half if beta is None else beta, eta, gamma)


@dataclass(frozen=True)
class BallChain:
    """Waypoints ``x_1..x_M`` with covering balls around each of them."""

    waypoints: Tuple[Tuple[float, ...], ...]
    radius: float
    beta_radius: float
    r_n: float
    theta: float

    @property
    def M_n(self) -> int:
        return len(self.waypoints)

    @property
    def centers(self) -> np.ndarray:
        return np.asarray(self.waypoints, dtype=float)

    @property
    def spacing(self) -> float:
        return self.theta * self.r_n / (2.0 + self.theta)


@dataclass(frozen=True)
class TimeWindows:
    """``T_0 .. T_M`` as inclusive ``(first, last)`` iteration ranges."""

    n: int
    n_prime: int
    windows: Tuple[Tuple[int, int], ...]

    @property
    def M_n(self) -> int:
        return len(self.windows) - 1

    @property
    def width(self) -> int:
        return self.windows[1][1] - self.windows[1][0] + 1 if len(self.windows) > 1 else 0

    def window_of(self, j: int) -> Optional[int]:
        """Index ``i`` with ``j`` in ``T_i``, or None past the last window."""
        if 1 <= j <= self.n_prime:
            return 0
        w = self.width
        if j <= self.n_prime or w == 0:
            return None
        i = (j - self.n_prime - 1) // w + 1
        return i if i <= self.M_n else None


@dataclass
class EventReport:
    e1: bool
    e2: bool
    e3: bool
    k_beta: int
    per_ball_hits: List[int]
    per_ball_beta_hits: List[int] = field(default_factory=list)


def compute_Mn(c_sigma: float, r_n: float, theta: float) -> int:
    """``ceil(c_sigma * (2 + theta) / r_n)``, at least 1.

    Quotients within 1e-9 of an integer snap to it first, so exact-integer
    cases do not round up on floating-point noise.
    """
    if not r_n > 0:
        raise ContractError("r_n must be positive")
    q = c_sigma * (2.0 + theta) / r_n
    k = round(q)
    if abs(q - k) <= 1e-9 * max(1.0, abs(q)):
        q = float(k)
    return max(1, math.ceil(q))


def _point_at(pts: np.ndarray, cum: np.ndarray, s: float) -> Tuple[float, ...]:
    k = int(np.searchsorted(cum, s, side="right")) - 1
    k = min(max(k, 0), len(pts) - 2)
    seg = cum[k + 1] - cum[k]
    if seg == 0.0:
        return tuple(float(c) for c in pts[k])
    lam = (s - cum[k]) / seg
    return tuple(float(c) for c in pts[k] + (pts[k + 1] - pts[k]) * lam)


def build_ball_chain(
    sigma_eps: Polyline,
    params: ProofParams,
    n: int,
    *,
    clearance: Optional[float] = None,
    r_n: Optional[float] = None,
) -> BallChain:
    """Place waypoints along ``sigma_eps`` at arc-length spacing ``theta*r/(2+theta)``.

    The final step is shortened so the last waypoint is the path's endpoint.

    Args:
        sigma_eps: Reference path from s to t.
        params: Proof constants; ``params.gamma`` sets the default radius.
        n: Sample count the radius is evaluated at.
        clearance: Clearance of ``sigma_eps``. When given, balls must have a
            radius strictly below it so that they lie in free space.
        r_n: Radius override. Defaults to the corrected schedule at ``n``.

    Raises:
        ChainError: The balls are not guaranteed inside free space.
    """
    d = sigma_eps.dimension
    if r_n is None:
        r_n = radius_value(RadiusScheduleSpec("corrected", params.gamma), n, d)
    if not r_n > 0:
        raise ChainError(f"radius r(n)={r_n!r} must be positive")
    theta = params.theta
    rad = r_n / (2.0 + theta)
    if clearance is not None and rad >= clearance:
        raise ChainError(
            f"balls not guaranteed inside F: ball radius {rad:.6g} >= clearance {clearance:.6g}"
        )
    pts = sigma_eps.as_array()
    seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1)) if len(pts) > 1 else np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(cum[-1])
    h = theta * r_n / (2.0 + theta)
    if length == 0.0:
        wps = (tuple(float(c) for c in pts[0]),)
    else:
        steps = max(1, math.ceil(length / h - 1e-9))
        wps = [tuple(float(c) for c in pts[0])]
        wps += [_point_at(pts, cum, k * h) for k in range(1, steps)]
        wps.append(tuple(float(c) for c in pts[-1]))
        wps = tuple(wps)
    return BallChain(wps, rad, params.beta * rad, float(r_n), float(theta))


def build_time_windows(n: int, mu: float, M_n: int) -> TimeWindows:
    """``T_0 = {1..n'}`` and ``T_i = {n' + (i-1)w + 1 .. n' + iw}`` with ``w = floor((n-n')/M)``."""
    if M_n < 1:
        raise WindowError("M_n must be at least 1")
    n_prime = math.floor(mu * n)
    w = (n - n_prime) // M_n
    if w < 1:
        raise WindowError(f"n too small for M_n: floor(({n}-{n_prime})/{M_n}) = 0")
    wins = [(1, n_prime)] + [(n_prime + (i - 1) * w + 1, n_prime + i * w) for i in range(1, M_n + 1)]
    return TimeWindows(n, n_prime, tuple(wins))


def claim1_max_pair_distance(chain: BallChain, i: int) -> float:
    """Largest distance between a point of ball ``i`` and one of ball ``i+1`` (1-based)."""
    if not 1 <= i < chain.M_n:
        raise ContractError(f"i={i} outside 1..{chain.M_n - 1}")
    return dist(chain.waypoints[i - 1], chain.waypoints[i]) + 2.0 * chain.radius


def _window_vertices(tree: PlannerTree, windows: TimeWindows, i: int) -> np.ndarray:
    lo, hi = windows.windows[i]
    vit = tree.vertex_iteration
    return np.flatnonzero((vit >= lo) & (vit <= hi))


def _dist_rows(P: np.ndarray, x) -> np.ndarray:
    return np.sqrt(np.sum((P - np.asarray(x, dtype=float)) ** 2, axis=1))


def _in_any_ball(points: np.ndarray, chain: BallChain) -> np.ndarray:
    hit = np.zeros(points.shape[0], dtype=bool)
    for c in chain.centers:
        hit |= _dist_rows(points, c) <= chain.radius
    return hit


def _e1_violations(trace: RunTrace, chain: BallChain, first: int, last: int) -> Tuple[int, int]:
    lo, hi = max(first, 1), min(last, len(trace))
    if hi < lo:
        return 0, 0
    xr = trace.x_rand[lo - 1 : hi]
    xn = trace.x_new[lo - 1 : hi]
    bad = _in_any_ball(xr, chain) & np.any(xr != xn, axis=1)
    return int(bad.sum()), hi - lo + 1


def e1_violation_fraction(trace: RunTrace, chain: BallChain, windows: TimeWindows) -> float:
    """Fraction of iterations ``n' < j <= n`` where a ball sample was moved by steering."""
    bad, total = _e1_violations(trace, chain, windows.n_prime + 1, windows.n)
    return bad / total if total else 0.0


def detect_events(
    trace: RunTrace,
    tree: PlannerTree,
    chain: BallChain,
    windows: TimeWindows,
    params: ProofParams,
) -> EventReport:
    """Evaluate E1, E2 and E3 on a finished run.

    E1 holds when no sample with iteration in ``[n', n]`` that lands in a
    covering ball was altered by steering. E2 holds when each ball ``i``
    contains a vertex of ``V_i``. E3 holds when at most ``alpha * M`` of the
    shrunken balls miss ``V_i``.
    """
    if len(trace) != windows.n:
        raise ContractError(f"trace has {len(trace)} iterations, windows expect {windows.n}")
    if chain.M_n != windows.M_n:
        raise ContractError("chain and windows disagree on M_n")
    bad, _ = _e1_violations(trace, chain, windows.n_prime, windows.n)
    hits, beta_hits = [], []
    for i in range(1, chain.M_n + 1):
        ids = _window_vertices(tree, windows, i)
        dd = _dist_rows(tree.vertices[ids], chain.waypoints[i - 1]) if ids.size else np.zeros(0)
        hits.append(int(np.count_nonzero(dd <= chain.radius)))
        beta_hits.append(int(np.count_nonzero(dd <= chain.beta_radius)))
    k_beta = sum(1 for b in beta_hits if b == 0)
    return EventReport(
        e1=bad == 0,
        e2=all(h > 0 for h in hits),
        e3=k_beta <= params.alpha * chain.M_n,
        k_beta=k_beta,
        per_ball_hits=hits,
        per_ball_beta_hits=beta_hits,
    )


def sigma_prime_representatives(tree: PlannerTree, chain: BallChain, windows: TimeWindows) -> Optional[List[int]]:
    """Vertex ids chosen per ball: a shrunken-ball member if any, else a ball member.

    Ties go to the smallest id. Returns None if some ball has no member from
    its window. Entries for the first and last ball are the ids used before
    the endpoints are forced to s and t.
    """
    reps = []
    for i in range(1, chain.M_n + 1):
        ids = _window_vertices(tree, windows, i)
        if ids.size == 0:
            return None
        dd = _dist_rows(tree.vertices[ids], chain.waypoints[i - 1])
        inner = ids[dd <= chain.beta_radius]
        outer = ids[dd <= chain.radius]
        if inner.size:
            reps.append(int(inner.min()))
        elif outer.size:
            reps.append(int(outer.min()))
        else:
            return None
    return reps


def assemble_sigma_prime(tree: PlannerTree, chain: BallChain, windows: TimeWindows) -> Optional[Polyline]:
    """Path through one window representative per ball, with endpoints s and t.

    Returns None when E2 fails.
    """
    reps = sigma_prime_representatives(tree, chain, windows)
    if reps is None:
        return None
    pts = [tree.point(v) for v in reps]
    pts[0] = tuple(chain.waypoints[0])
    pts[-1] = tuple(chain.waypoints[-1])
    return Polyline(tuple(pts))


def lemma4_cost_bound(chain: BallChain, params: ProofParams, k_beta: int) -> float:
    """Worst-case cost of the assembled path given ``k_beta`` missed shrunken balls.

    Each hop is at most ``(theta + a + b) * u`` with ``u = r/(2+theta)`` and
    ``a, b`` equal to ``beta`` for representatives in a shrunken ball and 1
    otherwise. The endpoints sit at ball centers, so only interior balls can
    miss, and each interior miss lengthens two hops. Summing gives
    ``(M-1)(theta+2*beta)u + 2*min(k_beta, M-2)(1-beta)u``.
    """
    M = chain.M_n
    if not 0 <= k_beta <= M:
        raise ContractError(f"k_beta={k_beta} outside 0..{M}")
    if M == 1:
        return 0.0
    u = chain.r_n / (2.0 + chain.theta)
    misses = min(k_beta, M - 2)
    return (M - 1) * (params.theta + 2.0 * params.beta) * u + 2.0 * misses * (1.0 - params.beta) * u


def xi_constant(theta: float, mu: float, d: int, c_sigma: float, free_volume: float) -> float:
    """``theta * zeta_d * (1-mu) / (c_sigma * (2+theta)^(d+1) * |F|)``."""
    return theta * unit_ball_volume(d) * (1.0 - mu) / (c_sigma * (2.0 + theta) ** (d + 1) * free_volume)


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> Tuple[float, float]:
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        return (0.0, 1.0)
    p = k / n
    z2 = z * z
    den = 1.0 + z2 / n
    mid = (p + z2 / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


def trial_seed(seed: int, trial: int) -> int:
    """Sub-seed of ``trial`` under master ``seed``; independent of execution order."""
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrialResult:
    seed: int
    n: int
    trial: int
    e1: bool
    e2: bool
    e3: bool
    k_beta: int
    M_n: int
    r_n: float
    cost: float
    sigma_prime_cost: float = math.nan
    bound: float = math.nan
    e1_violation: float = 0.0

    def row(self) -> list:
        return [self.seed, self.n, self.trial, int(self.e1), int(self.e2), int(self.e3), self.k_beta, self.M_n, repr(self.r_n), repr(self.cost)]


@dataclass
class EventRates:
    """Event frequencies over trials, each with a Wilson 95% interval."""

    n: int
    trials: List[TrialResult]

    def _rate(self, pick) -> Tuple[float, Tuple[float, float]]:
        k = sum(1 for t in self.trials if pick(t))
        m = len(self.trials)
        return (k / m if m else math.nan), wilson_interval(k, m)

    @property
    def e1(self):
        return self._rate(lambda t: t.e1)

    @property
    def e2(self):
        return self._rate(lambda t: t.e2)

    @property
    def e3(self):
        return self._rate(lambda t: t.e3)

    @property
    def e2_and_e3(self):
        return self._rate(lambda t: t.e2 and t.e3)


def proof_setup(sc: Scenario, params: ProofParams, schedule: RadiusScheduleSpec, n: int):
    """Chain and windows for ``sc`` at sample count ``n``."""
    if sc.reference_path is None:
        raise ContractError("scenario needs a reference path for the proof constructions")
    r_n = radius_value(schedule, n, sc.dimension)
    chain = build_ball_chain(sc.reference_path, params, n, clearance=sc.clearance, r_n=r_n)
    windows = build_time_windows(n, params.mu, chain.M_n)
    return chain, windows


def run_trial(sc, params, schedule, n, seed, trial, backend=None) -> TrialResult:
    """One seeded planner run with all proof-side quantities evaluated."""
    chain, windows = proof_setup(sc, params, schedule, n)
    tree, trace = rrt_star_run(sc, n, params.eta, schedule, Sampler.uniform(trial_seed(seed, trial)), backend=backend)
    rep = detect_events(trace, tree, chain, windows, params)
    sol = solution_path(tree, sc, chain.r_n)
    sp = assemble_sigma_prime(tree, chain, windows) if rep.e2 else None
    return TrialResult(
        seed=int(seed),
        n=int(n),
        trial=int(trial),
        e1=rep.e1,
        e2=rep.e2,
        e3=rep.e3,
        k_beta=rep.k_beta,
        M_n=chain.M_n,
        r_n=chain.r_n,
        cost=math.inf if sol is None else sol[1],
        sigma_prime_cost=math.nan if sp is None else path_cost(sp),
        bound=lemma4_cost_bound(chain, params, rep.k_beta),
        e1_violation=e1_violation_fraction(trace, chain, windows),
    )


def thread_count(default: int = 1) -> int:
    """Worker count from ``RRTLAB_THREADS`` (at least 1)."""
    raw = os.environ.get("RRTLAB_THREADS", "").strip()
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


def run_trials(sc, params, schedule, n, trials, seeds: Sequence[int], backend=None) -> List[TrialResult]:
    """All ``(seed, trial)`` cells, sorted by ``(seed, trial)`` whatever the thread count."""
    if trials < 1:
        raise ContractError("trials must be >= 1")
    cells = [(s, t) for s in seeds for t in range(trials)]
    proof_setup(sc, params, schedule, n)  # fail fast on bad chains or windows
    workers = thread_count()
    if workers == 1:
        out = [run_trial(sc, params, schedule, n, s, t, backend) for s, t in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda c: run_trial(sc, params, schedule, n, c[0], c[1], backend), cells))
    return sorted(out, key=lambda r: (r.seed, r.trial))


def estimate_event_rates(
    sc: Scenario,
    params: ProofParams,
    schedule: RadiusScheduleSpec,
    n: int,
    trials: int,
    seed: int,
    backend: Optional[str] = None,
) -> EventRates:
    """Run ``trials`` seeded RRT* runs and tally E1, E2, E3 and E2&E3."""
    return EventRates(int(n), run_trials(sc, params, schedule, n, trials, [seed], backend))


def trials_csv(rows: Sequence[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_CSV_COLUMNS)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def c_star_of(sc: Scenario) -> float:
    """Robust optimum implied by the scenario: reference cost divided by its stretch."""
    return sc.reference_cost() / (sc.stretch or 1.0)


def auto_gamma(sc: Scenario, eps: float, theta: float, mu: float) -> float:
    """Smallest admissible gamma for ``sc`` under the given constants."""
    from .planner import gamma_lower_bound

    return gamma_lower_bound(eps, theta, mu, sc.dimension, c_star_of(sc), sc.free_volume)
