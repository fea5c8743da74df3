"""``rrtlab`` command line: plan, events, counterexample, bench.

Exit codes: 0 success, 1 verification failure, 2 validation error, 64 usage.
All CSV output is sorted and uses round-trip float formatting, so repeated
invocations with the same flags are byte-identical whatever ``RRTLAB_THREADS``
is set to. Wall-clock columns are only written with ``--timing``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ContractError, RunError, ScenarioParseError, ScenarioValidationError
from .planner import RadiusScheduleSpec, Sampler, radius_value, rrt_run, rrt_star_run, solution_path
from .prooflab import (
    EVENT_CSV_COLUMNS,
    ProofParams,
    auto_gamma,
    run_trials,
    thread_count,
    trials_csv,
    wilson_interval,
)
from .scenario import BUNDLED, Scenario, load_bundled, read_scenario

EXIT_OK, EXIT_VERIFY, EXIT_INVALID, EXIT_USAGE = 0, 1, 2, 64

PLAN_COLUMNS = ("algo", "schedule", "n", "seed", "gamma", "eta", "radius_n", "success", "cost", "vertices")
EVENTS_COLUMNS = (
    "schedule", "n", "trials",
    "e1_rate", "e1_lo", "e1_hi",
    "e2_rate", "e2_lo", "e2_hi",
    "e3_rate", "e3_lo", "e3_hi",
    "e2e3_rate", "e2e3_lo", "e2e3_hi",
)
BENCH_COLUMNS = ("kind", "schedule", "n", "seed", "cost", "runs", "successes", "median", "q1", "q3", "iqr")


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _int_list(text: str) -> List[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _str_list(text: str) -> List[str]:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _load_scenario(source: str) -> Scenario:
    p = Path(source)
    if p.exists():
        try:
            return read_scenario(p)
        except (ScenarioParseError, ScenarioValidationError) as exc:
            raise ValidationError(f"{source}: {exc}") from exc
    if source in BUNDLED:
        return load_bundled(source)
    raise ValidationError(f"scenario file not found: {source}")


def _schedule(kind: str, gamma_arg: str, radius: Optional[float], sc: Scenario, eps, theta, mu) -> RadiusScheduleSpec:
    try:
        if kind in ("const", "constant"):
            if radius is None:
                raise ValidationError("--schedule const needs --radius")
            return RadiusScheduleSpec("constant", constant_value=radius)
        if gamma_arg == "auto":
            if sc.reference_path is None:
                raise ValidationError("--gamma auto needs a scenario with a reference path")
            gamma = auto_gamma(sc, eps, theta, mu)
        else:
            gamma = float(gamma_arg)
        return RadiusScheduleSpec(kind, gamma)
    except ContractError as exc:
        raise ValidationError(str(exc)) from exc


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _map(fn, items):
    workers = thread_count()
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _add_common(p, *, events=False):
    p.add_argument("--scenario", required=True, help=f"scene file, or a bundled name ({', '.join(BUNDLED)})")
    p.add_argument("--schedule", default="corrected", help="kf, corrected or const; comma list for events/bench")
    p.add_argument("--gamma", default="auto", help="radius constant, or 'auto' for the admissible lower bound")
    p.add_argument("--radius", type=float, default=None, help="radius for --schedule const")
    p.add_argument("--n", type=_int_list, required=True, help="sample counts, comma separated")
    p.add_argument("--seeds", type=_int_list, default=[0], help="seeds, comma separated")
    p.add_argument("--eta", type=float, default=0.5, help="steering step")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=0.2)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p.add_argument("--backend", choices=("numba", "numpy"), default=None)
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")


def cmd_plan(args) -> int:
    sc = _load_scenario(args.scenario)
    if not args.eta > 0:
        raise ValidationError("--eta must be positive")
    kinds = _str_list(args.schedule)
    if len(kinds) != 1:
        raise ValidationError("plan takes a single --schedule")
    sched = None
    if args.algo == "rrtstar":
        sched = _schedule(kinds[0], args.gamma, args.radius, sc, args.eps, args.theta, args.mu)

    def one(cell):
        n, seed = cell
        t0 = time.perf_counter()
        if sched is None:
            tree, _ = rrt_run(sc, n, args.eta, Sampler.uniform(seed), backend=args.backend)
            rad = args.connect_radius or args.eta
        else:
            tree, _ = rrt_star_run(sc, n, args.eta, sched, Sampler.uniform(seed), backend=args.backend)
            rad = args.connect_radius or min(radius_value(sched, n, sc.dimension), args.eta)
        sol = solution_path(tree, sc, rad)
        dt = time.perf_counter() - t0
        cost = math.inf if sol is None else sol[1]
        gamma = "" if sched is None else (sched.constant_value if sched.kind == "constant" else sched.gamma)
        row = [args.algo, "" if sched is None else sched.short_name, n, seed, gamma, args.eta, rad, sol is not None, cost, len(tree)]
        if args.timing:
            row.append(round(dt, 6))
        return row

    rows = _map(one, [(n, s) for n in args.n for s in args.seeds])
    rows.sort(key=lambda r: (r[2], r[3]))
    cols = PLAN_COLUMNS + (("runtime_s",) if args.timing else ())
    if args.json:
        _write(json.dumps([dict(zip(cols, r)) for r in rows], indent=2) + "\n", args.out)
    else:
        _write(_csv(cols, rows), args.out)
    return EXIT_OK


def _params_from(args, gamma: float) -> ProofParams:
    half = args.theta * args.eps / 32.0 if 0 < args.theta and 0 < args.eps else 0.0
    try:
        return ProofParams(
            args.eps,
            args.theta,
            args.mu,
            half if args.alpha is None else args.alpha,
            half if args.beta is None else args.beta,
            args.eta,
            gamma,
        )
    except ContractError as exc:
        raise ValidationError(f"inadmissible proof parameters: {exc}") from exc


def cmd_events(args) -> int:
    sc = _load_scenario(args.scenario)
    _params_from(args, 1.0)  # range errors before any gamma arithmetic
    if args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    rows, trial_rows = [], []
    for kind in _str_list(args.schedule):
        sched = _schedule(kind, args.gamma, args.radius, sc, args.eps, args.theta, args.mu)
        params = _params_from(args, sched.gamma if sched.kind != "constant" else 1.0)
        for n in args.n:
            try:
                res = run_trials(sc, params, sched, n, args.trials, args.seeds, backend=args.backend)
            except (ContractError, ValueError) as exc:
                raise ValidationError(f"n={n}, schedule={sched.short_name}: {exc}") from exc
            trial_rows.extend(res)
            m = len(res)
            row = [sched.short_name, n, m]
            for pick in (lambda t: t.e1, lambda t: t.e2, lambda t: t.e3, lambda t: t.e2 and t.e3):
                k = sum(1 for t in res if pick(t))
                lo, hi = wilson_interval(k, m)
                row += [k / m, lo, hi]
            rows.append(row)
    rows.sort(key=lambda r: (r[0], r[1]))
    if args.json:
        _write(json.dumps([dict(zip(EVENTS_COLUMNS, r)) for r in rows], indent=2) + "\n", args.out)
    else:
        _write(_csv(EVENTS_COLUMNS, rows), args.out)
    if args.trials_out:
        Path(args.trials_out).write_text(trials_csv(trial_rows))
    return EXIT_OK


def cmd_counterexample(args) -> int:
    from .counterexample import build_fixture, perturb, verify_fixture

    fx = build_fixture()
    if args.perturb:
        fx = perturb(fx, args.perturb, args.perturb_seed)
    # 23 iterations: loading the JIT cache would cost more than the replay.
    rep = verify_fixture(fx, backend=args.backend or "numpy")
    text = rep.to_json() if args.json else rep.to_text()
    _write(text, args.out)
    if not rep.passed:
        sys.stderr.write(f"verification failed: {rep.first_failure.name}\n")
        return EXIT_VERIFY
    return EXIT_OK


def _bench_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {args.config}")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON: {exc.msg} (line {exc.lineno})")
        known = {"scenario", "schedules", "n", "seeds", "eta", "gamma", "radius", "out"}
        extra = sorted(set(cfg) - known)
        if extra:
            raise ValidationError(f"{args.config}: unknown field {extra[0]!r}")
    merged = {
        "scenario": args.scenario or cfg.get("scenario"),
        "schedules": _str_list(args.schedule) if args.schedule else cfg.get("schedules", ["kf", "corrected"]),
        "n": args.n or cfg.get("n"),
        "seeds": args.seeds or cfg.get("seeds"),
        "eta": args.eta if args.eta is not None else cfg.get("eta", 0.5),
        "gamma": args.gamma if args.gamma is not None else str(cfg.get("gamma", "auto")),
        "radius": args.radius if args.radius is not None else cfg.get("radius"),
        "out": args.out or cfg.get("out"),
    }
    for key in ("scenario", "n", "seeds"):
        if not merged[key]:
            raise ValidationError(f"bench needs {key} (flag or config field)")
    return merged


def _quartiles(xs):
    if not xs:
        return math.inf, math.nan, math.nan
    q1, med, q3 = np.percentile(np.asarray(xs), [25, 50, 75])
    return float(med), float(q1), float(q3)


def cmd_bench(args) -> int:
    cfg = _bench_config(args)
    sc = _load_scenario(cfg["scenario"])
    eta = float(cfg["eta"])
    if not eta > 0:
        raise ValidationError("eta must be positive")
    scheds = [_schedule(k, cfg["gamma"], cfg["radius"], sc, args.eps, args.theta, args.mu) for k in cfg["schedules"]]

    def one(cell):
        sched, n, seed = cell
        tree, _ = rrt_star_run(sc, n, eta, sched, Sampler.uniform(seed), backend=args.backend)
        sol = solution_path(tree, sc, min(radius_value(sched, n, sc.dimension), eta))
        return (sched.short_name, n, seed, math.inf if sol is None else sol[1])

    cells = [(s, n, seed) for s in scheds for n in cfg["n"] for seed in cfg["seeds"]]
    runs = sorted(_map(one, cells), key=lambda r: (r[0], r[1], r[2]))
    rows = [["run", name, n, seed, cost, "", "", "", "", "", ""] for name, n, seed, cost in runs]
    groups = {}
    for name, n, _, cost in runs:
        groups.setdefault((name, n), []).append(cost)
    for (name, n), costs in sorted(groups.items()):
        ok = sorted(c for c in costs if math.isfinite(c))
        med, q1, q3 = _quartiles(ok)
        rows.append(["aggregate", name, n, "", "", len(costs), len(ok), med, q1, q3, q3 - q1])
    _write(_csv(BENCH_COLUMNS, rows), cfg["out"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rrtlab", description="RRT / RRT* laboratory")
    p.add_argument("--version", action="version", version=f"rrtlab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    pl = sub.add_parser("plan", help="run RRT or RRT* and report solution costs")
    _add_common(pl)
    pl.add_argument("--algo", choices=("rrt", "rrtstar"), default="rrtstar")
    pl.add_argument("--connect-radius", type=float, default=None, help="goal attachment radius (default min(r(n), eta))")
    pl.add_argument("--timing", action="store_true", help="add a wall-clock runtime_s column")
    pl.set_defaults(func=cmd_plan)

    ev = sub.add_parser("events", help="estimate E1/E2/E3 frequencies with Wilson intervals")
    _add_common(ev)
    ev.add_argument("--trials", type=int, default=10, help="trials per seed")
    ev.add_argument("--alpha", type=float, default=None, help="default theta*eps/32")
    ev.add_argument("--beta", type=float, default=None, help="default theta*eps/32")
    ev.add_argument("--trials-out", default=None, help=f"per-trial CSV ({','.join(EVENT_CSV_COLUMNS)})")
    ev.set_defaults(func=cmd_events)

    cx = sub.add_parser("counterexample", help="replay and verify the frozen adversarial run")
    cx.add_argument("--json", action="store_true")
    cx.add_argument("--perturb", type=float, default=0.0, help="test hook: shift every sample by this distance")
    cx.add_argument("--perturb-seed", type=int, default=0)
    cx.add_argument("--out", default=None)
    cx.add_argument("--backend", choices=("numba", "numpy"), default=None)
    cx.set_defaults(func=cmd_counterexample)

    be = sub.add_parser("bench", help="compare radius schedules over n and seeds")
    be.add_argument("--config", default=None, help="JSON file with scenario, schedules, n, seeds, eta, gamma, radius, out")
    be.add_argument("--scenario", default=None)
    be.add_argument("--schedule", default=None, help="comma list (default kf,corrected)")
    be.add_argument("--gamma", default=None)
    be.add_argument("--radius", type=float, default=None)
    be.add_argument("--n", type=_int_list, default=None)
    be.add_argument("--seeds", type=_int_list, default=None)
    be.add_argument("--eta", type=float, default=None)
    be.add_argument("--eps", type=float, default=0.5)
    be.add_argument("--theta", type=float, default=0.2)
    be.add_argument("--mu", type=float, default=0.5)
    be.add_argument("--out", default=None)
    be.add_argument("--backend", choices=("numba", "numpy"), default=None)
    be.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (ContractError, ScenarioParseError, ScenarioValidationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except RunError as exc:
        sys.stderr.write(f"run error: {exc}\n")
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
