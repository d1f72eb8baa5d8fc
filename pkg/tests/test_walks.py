import math

import numpy as np
import pytest

from rwre.environment import Environment, EnvironmentLaw, OverrideEnvironment
from rwre.errors import InsufficientSamples, StepBudgetExceeded
from rwre.geometry import BoundaryClass, BoxTriple, Direction
from rwre.oracle import homogeneous_ruin
from rwre.quenched import SlabGeometry, box_failure_probability
from rwre.walks import (EXACT, EventSpec, LevelCounter, StopSpec, correlation_flags, estimate_probability,
                        exact_event_bracket, independence_diagnostic, replica_environment, simulate_walk,
                        simulate_walks)

E1 = Direction((1.0, 0.0))
DRIFT = EnvironmentLaw(2, 0.2, "deterministic_drift", {"eps": 0.05})
SIMPLEX = EnvironmentLaw(2, 0.1, "simplex_uniform_floor")


def test_symmetric_one_dimensional_slab():
    env = Environment(EnvironmentLaw(1, 0.5, "deterministic_drift", {"eps": 0.0}), 0)
    n = 10 ** 5
    b = simulate_walks(env, None, StopSpec.slab(Direction((1.0,)), 10), 99, n=n)
    freq = np.mean(b.exit_class == int(BoundaryClass.NEGATIVE))
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_steps_at_least_l1_distance():
    env = Environment(SIMPLEX, 4)
    start = np.array([1, -2])
    b = simulate_walks(env, start, StopSpec(StopSpec.slab(Direction.from_angle(0.4), 6).frame, -6, 6, 5.0), 1,
                       n=2000)
    assert np.all(b.steps >= np.abs(b.exit_sites - start).sum(axis=1))
    assert set(np.unique(b.exit_class)) <= {0, 1, 2}


def test_same_stream_same_outcome():
    env = Environment(SIMPLEX, 4)
    stop = StopSpec.slab(E1, 8)
    a = simulate_walk(env, None, stop, 17, (3, 41))
    b = simulate_walk(Environment(SIMPLEX, 4), None, stop, 17, (3, 41))
    c = simulate_walk(env, None, stop, 17, (3, 42))
    assert a == b
    assert a.stream != c.stream


def test_walk_batches_independent_of_chunking_and_threads():
    env = Environment(SIMPLEX, 4)
    stop = StopSpec.slab(E1, 8)
    a = simulate_walks(env, None, stop, 5, n=3000, chunk=4096)
    b = simulate_walks(env, None, stop, 5, n=3000, chunk=257, threads=8)
    np.testing.assert_array_equal(a.exit_sites, b.exit_sites)
    np.testing.assert_array_equal(a.steps, b.steps)
    # a later window of the same stream reproduces the tail
    c = simulate_walks(env, None, stop, 5, n=1000, first=2000)
    np.testing.assert_array_equal(a.steps[2000:], c.steps)


def test_step_budget():
    env = Environment(SIMPLEX, 4)
    with pytest.raises(StepBudgetExceeded):
        simulate_walks(env, None, StopSpec.slab(E1, 100), 0, n=10, budget=50)


def test_needs_law_backed_environment():
    env = OverrideEnvironment(Environment(SIMPLEX, 0), {})
    with pytest.raises(TypeError):
        simulate_walks(env, None, StopSpec.slab(E1, 3), 0)


def test_excursion_counter_one_dimension():
    # strong drift: every walk crosses each level once, so it leaves H_i forwards exactly once
    env = Environment(EnvironmentLaw(1, 0.01, "deterministic_drift", {"eps": 0.49}), 0)
    out = simulate_walk(env, None, StopSpec(StopSpec.slab(Direction((1.0,)), 1).frame, -30, 30), 0, (0, 0),
                        LevelCounter(10.0, -1, 2))
    assert out.exit_class == BoundaryClass.POSITIVE
    assert out.excursions == {-1: 0, 0: 1, 1: 1, 2: 1}


def test_exact_mode_deterministic_law_zero_width():
    est = estimate_probability(DRIFT, EventSpec(StopSpec.slab(E1, 10)), 1, EXACT)
    assert est.width == 0.0
    assert est.estimate == pytest.approx(homogeneous_ruin(0.6, 20, 10), abs=1e-9)


def test_exact_event_box_matches_box_solver():
    env = Environment(SIMPLEX, 3)
    box = BoxTriple.from_direction(Direction.from_angle(0.2), 5, 7)
    neg = exact_event_bracket(env, EventSpec(StopSpec.box(box), BoundaryClass.NEGATIVE))
    pos = exact_event_bracket(env, EventSpec(StopSpec.box(box), BoundaryClass.POSITIVE))
    assert neg.width == 0.0
    assert 1 - pos.lower == pytest.approx(box_failure_probability(env, box), abs=1e-12)


def test_no_environments():
    with pytest.raises(InsufficientSamples):
        estimate_probability(DRIFT, EventSpec(StopSpec.slab(E1, 10)), 0)


def test_mc_within_exact_band():
    event = EventSpec(StopSpec.slab(E1, 10))
    exact = homogeneous_ruin(0.6, 20, 10)
    n = 2000
    band = 3 * math.sqrt(exact * (1 - exact) / n)
    hits = sum(abs(estimate_probability(DRIFT, event, 1, n, master_seed=r).estimate - exact) <= band
               for r in range(200))
    assert hits >= 190


def test_mc_unbiased_against_exact_mode():
    event = EventSpec(StopSpec.slab(E1, 2))
    n_env, n_walk = 100, 10 ** 5
    mc = estimate_probability(SIMPLEX, event, n_env, n_walk, master_seed=3)
    per_env = [exact_event_bracket(replica_environment(SIMPLEX, 3, r), event).mid for r in range(n_env)]
    exact = math.fsum(per_env) / n_env
    # both estimates use the same replicas, so only walk noise separates them
    se = math.sqrt(math.fsum(p * (1 - p) for p in per_env) / n_walk) / n_env
    assert abs(mc.estimate - exact) <= 3 * se


def test_estimates_thread_independent():
    event = EventSpec(StopSpec.slab(E1, 4))
    a = estimate_probability(SIMPLEX, event, 12, 500, master_seed=8, threads=1)
    b = estimate_probability(SIMPLEX, event, 12, 500, master_seed=8, threads=8)
    assert a == b
    c = estimate_probability(SIMPLEX, event, 6, EXACT, master_seed=8, threads=1)
    d = estimate_probability(SIMPLEX, event, 6, EXACT, master_seed=8, threads=8)
    assert c == d


def test_correlation_flags_degenerate_input():
    g = np.random.default_rng(0)
    v = g.uniform(size=(50, 3))
    v[:, 1] = v[:, 0]
    corr, flags, thr = correlation_flags(v)
    assert corr[0, 1] == pytest.approx(1.0)
    assert flags[0, 1] and flags[1, 0]
    assert thr == pytest.approx(4 / math.sqrt(50))


def test_independence_needs_samples():
    with pytest.raises(InsufficientSamples):
        independence_diagnostic(SIMPLEX, SlabGeometry.create(E1, 5, 20), [0, 1], 10, 0)


def test_independence_small_run():
    res = independence_diagnostic(SIMPLEX, SlabGeometry.create(E1, 4, 12), [-1, 0, 1], 60, 2)
    assert res.disjoint_reads
    assert res.values.shape == (60, 3)
    assert res.n_pairs == 3 and res.n_flagged_pairs <= 1
