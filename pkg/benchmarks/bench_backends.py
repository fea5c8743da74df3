"""Wall-clock comparison of the numba and numpy planner kernels.

Usage::

    python benchmarks/bench_backends.py [--n 500,2000,8000] [--repeat 3]

Both backends run the same seeded RRT* problem; the script also asserts that
they return identical trees before reporting timings.
"""

import argparse
import time

import numpy as np

from rrtlab import planner, scenario
from rrtlab._backend import numba_available


def run(backend, sc, n, sched, seed):
    t0 = time.perf_counter()
    tree, trace = planner.rrt_star_run(sc, n, 0.3, sched, planner.Sampler.uniform(seed), backend=backend)
    return time.perf_counter() - t0, tree, trace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="two_boxes")
    ap.add_argument("--n", default="500,2000,8000")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--gamma", type=float, default=2.0)
    args = ap.parse_args()
    if not numba_available():
        raise SystemExit("numba is not importable; nothing to compare")

    sc = scenario.load_bundled(args.scenario)
    sched = planner.RadiusScheduleSpec("corrected", args.gamma)
    run("numba", sc, 50, sched, 0)  # compile or load the cache outside the timings

    print(f"{'n':>7} {'numba s':>10} {'numpy s':>10} {'speedup':>8}")
    for n in (int(v) for v in args.n.split(",")):
        tn, tp = [], []
        for rep in range(args.repeat):
            a, ta, ra = run("numba", sc, n, sched, rep)
            b, tb, rb = run("numpy", sc, n, sched, rep)
            assert np.array_equal(ta.parent, tb.parent) and np.array_equal(ta.cost, tb.cost)
            assert np.array_equal(ra.rewires, rb.rewires)
            tn.append(a)
            tp.append(b)
        mn, mp = min(tn), min(tp)
        print(f"{n:>7} {mn:>10.4f} {mp:>10.4f} {mp / mn:>7.1f}x")


if __name__ == "__main__":
    main()
