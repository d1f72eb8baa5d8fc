import json
import math

import pytest
from hypothesis import given, strategies as st

from rwre.environment import Environment, EnvironmentLaw
from rwre.errors import ConstraintViolation, HypothesisViolation
from rwre.geometry import Direction
from rwre.quenched import Interval, SlabGeometry, profile_from_rho
from rwre.renorm import (SCALESK, SCALESK0, SCALESK1, SCALESK2, SEED_48, SEED_N3, ConstantsConfig, SeedStep,
                         brute_force_tail, build_ladder, dk_sequence, recursion_decrement, seed_rhs_direct,
                         seed_rhs_eval, validate_ladder, verify_quenched_chain)


def test_ladder_example():
    lad = build_ladder(7, 49, 2, 3, 2)
    assert lad.L == [7, 14, 28, 56]
    assert lad.Lt == [49, 392, 3136, 25088]
    assert not lad.constraints[SEED_48]


def test_scalesk0_rejected():
    with pytest.raises(ConstraintViolation) as exc:
        build_ladder(4, 16, 2, 3, 2)
    assert exc.value.display == SCALESK0 and "(scalesk0)" in str(exc.value)


def test_scalesk_rejected():
    with pytest.raises(ConstraintViolation) as exc:
        build_ladder(7, 7 ** 3, 2, 3, 2)
    assert exc.value.display == SCALESK
    with pytest.raises(ConstraintViolation):
        build_ladder(7, 7, 2, 3, 2)


def test_scalesk1_and_scalesk2_rejected_individually():
    with pytest.raises(ConstraintViolation) as exc:
        validate_ladder([7, 14, 29], [49, 392, 3136], 2, 2)
    assert exc.value.display == SCALESK1
    with pytest.raises(ConstraintViolation) as exc:
        validate_ladder([7, 14, 28], [49, 392, 3000], 2, 2)
    assert exc.value.display == SCALESK2
    assert validate_ladder([7, 14, 28], [49, 392, 3136], 2, 2)


def test_seed_step_needs_48N():
    with pytest.raises(ConstraintViolation) as exc:
        build_ladder(7, 49, 2, 3, 2, require_seed=True)
    assert exc.value.display == SEED_48
    assert build_ladder(7, 49, 7, 2, 2, require_seed=True).seed_ready


SMALL = SeedStep(L0=5.0, Lt0=6.0, L1=15.0, Lt1=162.0, N=3, Nt=144.0)


def small_constants(**kw):
    base = dict(d=2, kappa=0.25, beta=0.8, c1=0.1, c2=1.0, mu=1.0)
    base.update(kw)
    return ConstantsConfig(**base)


def test_seed_rhs_zero_expectation():
    rhs = seed_rhs_eval(small_constants(), SMALL, 0.0)
    assert rhs.terms[0] == 0.0 and rhs.terms[1] == 0.0
    assert rhs.total == pytest.approx(rhs.terms[2], rel=1e-15)


@given(st.floats(1e-12, 1.0), st.floats(0.0, 1.0))
def test_seed_rhs_monotone_in_expectation(e, frac):
    c = small_constants()
    assert seed_rhs_eval(c, SMALL, e * frac).log_total <= seed_rhs_eval(c, SMALL, e).log_total + 1e-12


@given(st.floats(0.1, 5.0), st.floats(1e-6, 1.0))
def test_doubling_mu(mu, e):
    a = seed_rhs_eval(small_constants(mu=mu), SMALL, e)
    b = seed_rhs_eval(small_constants(mu=2 * mu), SMALL, e)
    assert b.log_terms[2] < a.log_terms[2]
    assert b.log_terms[:2] == a.log_terms[:2]


@given(st.floats(1e-8, 1.0), st.floats(0.01, 0.3), st.floats(0.55, 0.95), st.floats(0.2, 3.0))
def test_log_space_matches_direct(e, c1, beta, c2):
    c = small_constants(c1=c1, beta=beta, c2=c2)
    direct = seed_rhs_direct(c, SMALL, e)
    if not all(math.isfinite(t) and t > 0 for t in direct):
        return
    for lt, t in zip(seed_rhs_eval(c, SMALL, e).log_terms, direct):
        assert math.exp(lt) == pytest.approx(t, rel=1e-9)


def test_seed_hypotheses_enforced():
    with pytest.raises(HypothesisViolation) as exc:
        seed_rhs_eval(small_constants(), SeedStep(5, 6, 10, 48, 2, 96), 0.1)
    assert exc.value.display == SEED_N3
    with pytest.raises(HypothesisViolation) as exc:
        seed_rhs_eval(small_constants(), SeedStep(5, 6, 15, 162, 3, 100), 0.1)
    assert exc.value.display == SEED_48
    with pytest.raises(HypothesisViolation) as exc:
        seed_rhs_eval(small_constants(), SeedStep(4, 6, 12, 162, 3, 144), 0.1)
    assert exc.value.display == SCALESK0


def test_recursion_decrement_example():
    c = ConstantsConfig(d=2, kappa=0.1, beta=0.8, c1=1.0)
    assert recursion_decrement(c, 100.0) == pytest.approx((1 + 3 * math.log(10)) * 100 ** 0.8 + 3, rel=1e-15)


@pytest.mark.parametrize("nu", [2.0, 3.0, 7.0, 50.0])
def test_recursion_closed_form(nu):
    c = ConstantsConfig(d=2, kappa=0.1, beta=0.8, c1=2.0, c7=1e4)
    tr = dk_sequence(c, nu, 7.0, 12)
    assert all(a > b for a, b in zip(tr.d, tr.d[1:]))
    brute = tr.d0 - brute_force_tail(tr.A, tr.ratio, 10 ** 6)
    assert tr.c8 == pytest.approx(brute, rel=1e-9)
    # the sequence approaches the limit from above
    assert tr.d[-1] > tr.c8 and tr.d[-1] - tr.c8 == pytest.approx(tr.A * tr.ratio ** 12 / (1 - tr.ratio), rel=1e-9)
    assert tr.c8_display - tr.c8 == pytest.approx(tr.A, rel=1e-12)


def test_recursion_large_nu_limit():
    c = ConstantsConfig(d=2, kappa=0.1, beta=0.8)
    tr = dk_sequence(c, 1e80, 7.0, 3)
    assert tr.c8_display == pytest.approx(tr.d0, rel=1e-12)
    assert tr.c8 == pytest.approx(tr.d0 - tr.A, rel=1e-12)


def test_recursion_needs_beta_range():
    with pytest.raises(ValueError):
        dk_sequence(ConstantsConfig(d=2, kappa=0.1, beta=0.7), 2.0, 7.0, 3)


def test_constants_validation():
    with pytest.raises(ValueError):
        ConstantsConfig(d=2, kappa=0.3)
    with pytest.raises(ValueError):
        ConstantsConfig(beta=1.0)
    assert ConstantsConfig(kappa=0.1, c1=1.0).ctilde == pytest.approx(math.log(10))


def test_unit_profile_ratio_used_by_checker():
    N = 3
    prof = profile_from_rho({i: Interval(1.0, 1.0) for i in range(-N + 1, N + 2)}, N)
    assert prof.ratio.lower == pytest.approx((N + 2) / (2 * N + 2), rel=1e-14)


def test_verify_chain_small_run():
    law = EnvironmentLaw(2, 0.1, "simplex_uniform_floor")
    geom = SlabGeometry.create(Direction((1.0, 0.0)), 5, 40)
    c = ConstantsConfig(d=2, kappa=0.1)
    for s in range(3):
        rep = verify_quenched_chain(Environment(law, s), geom, 3, c)
        assert rep.quenine.ok and not rep.quenine.violation
        assert rep.supermartingale.ok
        if rep.in_T:
            assert rep.eqcom.ok and not rep.eqcom.violation
            assert rep.excursion.ok
        rec = json.loads(json.dumps(rep.to_dict()))
        assert {"seed", "in_T", "quenine", "eqcom", "margins"} <= set(rec)
        assert {"lhs", "rhs", "ok"} <= set(rec["quenine"])
