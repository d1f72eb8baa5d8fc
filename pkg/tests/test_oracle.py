from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwre.oracle import RuinProblem, gambler_ruin_exact, homogeneous_ruin

probs = st.lists(st.floats(0.1, 0.9), min_size=1, max_size=49)


def dense_ruin(p, m):
    """Reference: dense solve of the absorbing chain on 0..n."""
    n = len(p) + 1
    A = np.eye(n - 1)
    b = np.zeros(n - 1)
    for k in range(1, n):
        r = k - 1
        if k + 1 < n:
            A[r, k] -= p[r]
        if k - 1 > 0:
            A[r, k - 2] -= 1 - p[r]
        else:
            b[r] += 1 - p[r]
    return np.linalg.solve(A, b)[m - 1]


def test_symmetric_example():
    assert homogeneous_ruin(0.5, 4, 2) == pytest.approx(0.5, abs=1e-15)


def test_biased_example():
    # (1/4 + 1/8) / (1 + 1/2 + 1/4 + 1/8)
    assert homogeneous_ruin(2 / 3, 4, 2) == pytest.approx(0.2, abs=1e-15)
    assert dense_ruin([2 / 3] * 3, 2) == pytest.approx(0.2, abs=1e-14)


@pytest.mark.parametrize("p, n, m", [(0.6, 20, 10), (0.7, 9, 4), (0.3, 15, 1)])
def test_homogeneous_closed_form(p, n, m):
    r = (1 - p) / p
    assert homogeneous_ruin(p, n, m) == pytest.approx((r ** m - r ** n) / (1 - r ** n), rel=1e-12)


def test_frozen_slab_value():
    # slab (-10, 10) under drift 0.05 in d = 2, projected right-probability 0.6;
    # exact rational value (r^10 - r^20) / (1 - r^20) with r = 2/3
    r = Fraction(2, 3)
    exact = (r ** 10 - r ** 20) / (1 - r ** 20)
    assert homogeneous_ruin(0.6, 20, 10) == pytest.approx(float(exact), rel=1e-12)
    assert float(exact) == pytest.approx(0.0170459274549298, rel=1e-13)


@given(probs, st.data())
def test_matches_dense_solve(p, data):
    m = data.draw(st.integers(1, len(p)))
    got = gambler_ruin_exact(RuinProblem(tuple(p), m, 0.1))
    assert got.absorb_left == pytest.approx(dense_ruin(p, m), abs=1e-10)


@given(probs, st.data())
def test_complementarity(p, data):
    m = data.draw(st.integers(1, len(p)))
    s = gambler_ruin_exact(RuinProblem(tuple(p), m))
    assert s.absorb_left + s.absorb_right == pytest.approx(1.0, abs=1e-14)


@given(probs, st.data(), st.floats(0.0, 0.3))
def test_raising_one_p_does_not_raise_ruin(p, data, bump):
    m = data.draw(st.integers(1, len(p)))
    k = data.draw(st.integers(0, len(p) - 1))
    q = list(p)
    q[k] = min(0.9, q[k] + bump)
    a = gambler_ruin_exact(RuinProblem(tuple(p), m)).absorb_left
    b = gambler_ruin_exact(RuinProblem(tuple(q), m)).absorb_left
    assert b <= a + 1e-14


def test_long_chain_no_overflow():
    s = gambler_ruin_exact(RuinProblem((0.1,) * 3000, 1500))
    assert 0.0 <= s.absorb_left <= 1.0 and np.isfinite(s.log_products).all()
    assert s.absorb_left == pytest.approx(1.0)


def test_rejects_bad_problems():
    with pytest.raises(ValueError):
        RuinProblem((0.5, 0.5), 0)
    with pytest.raises(ValueError):
        RuinProblem((0.05, 0.5), 1, kappa=0.1)
