import json

import numpy as np
import pytest

from rrtlab.counterexample import (
    ball_members,
    build_fixture,
    chain_exists_from_members,
    fixture_from_texts,
    monotone_chain_exists,
    pairwise_conditions,
    perturb,
    replay,
    script_text,
    verify_fixture,
)
from rrtlab.geometry import dist
from rrtlab.planner import RadiusScheduleSpec, Sampler, rrt_star_run
from rrtlab.prooflab import BallChain
from rrtlab.scenario import dumps, loads

import oracles


@pytest.fixture(scope="module")
def fx():
    return build_fixture()


def test_fixture_invariants(fx):
    assert len(fx.script) == 23 and fx.balls.M_n == 12
    assert fx.script[2] == fx.scenario.target
    assert fx.r < dist(fx.script[1], fx.script[2])
    assert dist(fx.scenario.start, fx.script[21]) <= fx.r
    assert dist(fx.scenario.start, fx.script[22]) <= fx.r
    assert fx.r == pytest.approx(2 * fx.balls.radius)


def test_golden_fixture_verifies(fx):
    rep = verify_fixture(fx)
    assert rep.passed, rep.to_text()
    assert rep.summary() == "(i)&(ii): PASS for all 11 pairs; (iii): ABSENT; path: s,X1,X2,t"
    assert rep.ratio >= 1.5


def test_replay_has_24_vertices(fx):
    tree, trace = replay(fx)
    assert len(tree) == 24
    assert trace.accepted.all()
    tree.check_invariants()


def test_backends_replay_identically(fx):
    a = replay(fx, backend="numpy")[0]
    b = replay(fx)[0]
    assert np.array_equal(a.parent, b.parent) and np.array_equal(a.cost, b.cost)


def test_fixture_round_trips(fx):
    back = fixture_from_texts(dumps(fx.scenario), script_text(fx))
    assert back.script == fx.script
    # theta is NaN here (hand-placed balls), so compare the geometry directly.
    assert back.balls.waypoints == fx.balls.waypoints and back.balls.radius == fx.balls.radius
    assert loads(dumps(fx.scenario)) == fx.scenario
    assert json.loads(script_text(back)) == json.loads(script_text(fx))


def test_report_is_deterministic(fx):
    assert verify_fixture(fx).to_json() == verify_fixture(fx).to_json()


@pytest.mark.parametrize("magnitude,seed", [(0.05, 0), (0.01, 1), (0.001, 0)])
def test_perturbation_breaks_the_fixture(fx, magnitude, seed):
    rep = verify_fixture(perturb(fx, magnitude, seed))
    assert not rep.passed
    assert rep.first_failure is not None
    assert "FAIL at" in rep.to_text()


def test_tiny_perturbation_stays_in_free_space(fx):
    moved = perturb(fx, 1e-3, 2)
    assert moved.script[2] == fx.script[2]
    assert all(dist(a, b) == pytest.approx(1e-3) for j, (a, b) in enumerate(zip(fx.script, moved.script)) if j != 2 and 0 < min(b) and max(b) < 1)


def _trace_for(points, d=2):
    from rrtlab.scenario import Scenario

    sc = Scenario(d, (), (0.01,) * d, (0.99,) * d)
    return rrt_star_run(sc, len(points), 5.0, RadiusScheduleSpec("const", constant_value=1e-6), Sampler.scripted(points))[1]


def test_chain_positive_control():
    centers = [(0.1 + 0.1 * i, 0.5) for i in range(6)]
    balls = BallChain(tuple(centers), 0.02, 0.0, 0.04, 0.2)
    tr = _trace_for(centers)
    assert monotone_chain_exists(tr, balls, start=(0.01, 0.01))
    tr_rev = _trace_for(centers[::-1])
    assert not monotone_chain_exists(tr_rev, balls, start=(0.01, 0.01))
    members = ball_members(tr_rev, balls, start=(0.01, 0.01))
    assert members == [[6], [5], [4], [3], [2], [1]]
    assert pairwise_conditions(members) == [False] * 5


def test_chain_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        M = int(rng.integers(1, 9))
        members = [sorted(set(rng.integers(0, 12, size=int(rng.integers(0, 4))).tolist())) for _ in range(M)]
        assert chain_exists_from_members(members) == oracles.brute_chain_exists(members)


def test_pairwise_allows_fixture_gap(fx):
    _, trace = replay(fx)
    members = ball_members(trace, fx.balls)
    assert all(pairwise_conditions(members))
    assert not oracles.brute_chain_exists(members)
