import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rwre.environment import Environment, EnvironmentLaw, OverrideEnvironment

settings.register_profile("rwre", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("rwre")

# filled by the acceptance module, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def chain_env(p):
    """1D environment with right-probability ``p[k-1]`` at site ``k``."""
    base = Environment(EnvironmentLaw(1, 1e-6, "simplex_uniform_floor"), 0)
    return OverrideEnvironment(base, {(k + 1,): (pk, 1.0 - pk) for k, pk in enumerate(p)})


def chain_problem(p, start):
    """Absorbing chain on 0..n started at ``start``; classes are the two ends."""
    from rwre.solver import AbsorbingProblem

    n = len(p) + 1
    return AbsorbingProblem(chain_env(p), np.arange(1, n)[:, None], np.array([[0], [n]]), np.array([0, 1]),
                            ("left", "right"), np.array([[start]]))


@pytest.fixture
def simplex2():
    return EnvironmentLaw(2, 0.1, "simplex_uniform_floor")


@pytest.fixture
def drift2():
    return EnvironmentLaw(2, 0.2, "deterministic_drift", {"eps": 0.05})


@pytest.fixture
def sym2():
    return EnvironmentLaw(2, 0.25, "deterministic_drift", {"eps": 0.0})


def rng(seed=0):
    return np.random.default_rng(seed)


def random_box_problem(g, max_side=14):
    """Random rotated 2D box with a random law, environment and start sites."""
    from rwre.geometry import BoundaryClass, BoxTriple, Direction, box_sites_and_boundary
    from rwre.solver import AbsorbingProblem

    theta = g.uniform(-np.pi / 4, np.pi / 4)
    box = BoxTriple.from_direction(Direction.from_angle(theta), g.uniform(0.6, max_side), g.uniform(0.6, max_side))
    kind = g.choice(["simplex_uniform_floor", "epsilon_perturbed_srw", "two_point"])
    if kind == "simplex_uniform_floor":
        law = EnvironmentLaw(2, float(g.uniform(0.01, 0.25)), kind)
    elif kind == "epsilon_perturbed_srw":
        law = EnvironmentLaw(2, 0.05, kind, {"eps": float(g.uniform(-0.2, 0.2)), "p_plus": float(g.uniform())})
    else:
        law = EnvironmentLaw(2, 0.05, kind, {"p_plus": [0.55, 0.05, 0.2, 0.2], "p_minus": [0.05, 0.55, 0.2, 0.2],
                                             "mix": float(g.uniform())})
    env = Environment(law, int(g.integers(2 ** 63)))
    bs = box_sites_and_boundary(box)
    k = min(len(bs.interior), 5)
    starts = bs.interior[g.choice(len(bs.interior), size=k, replace=False)]
    return AbsorbingProblem(env, bs.interior, bs.boundary, bs.labels,
                            tuple(c.name.lower() for c in BoundaryClass), starts)
