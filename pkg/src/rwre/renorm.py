"""Scale ladder, seed-estimate arithmetic, the d_k recursion and per-environment
verification of the constant-free quenched inequalities.

Quantities involving the unspecified constants ``c2..c6``, ``mu`` and ``c7``
are conditional on the user-supplied values (defaults 1.0); outputs say so.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import BracketNotTight, ConstraintViolation, HypothesisViolation
from .geometry import frontal_boundary, straddles
from .quenched import (back_exit_probability, ctilde, rho_f_profile, tilde_q_level, typical_event_check)
from .solver import AbsorbingProblem, solve_domain

CONDITIONAL = "conditional on constants"

# names of the displays each constraint comes from
SCALESK0 = "(scalesk0): L0 > 3*sqrt(d)"
SCALESK = "(scalesk): L0^3 > Lt0 > L0"
SCALESK1 = "(scalesk1): L_k = nu * L_{k-1}"
SCALESK2 = "(scalesk2): Lt_k = nu^3 * Lt_{k-1}"
SEED_N = "seed: N integer >= 2"
SEED_NT = "seed: Nt integer > N"
SEED_48 = "seed: Nt >= 48 N"
SEED_N3 = "seed: N >= 3"
SEED_LT0 = "seed: Lt0 > 3*sqrt(d)"
NU_MIN = "ladder: nu >= 2"


def _is_int(x, tol=1e-9):
    return abs(x - round(x)) <= tol * max(1.0, abs(x))


@dataclass
class ScaleLadder:
    L0: float
    Lt0: float
    nu: float
    k_max: int
    d: int
    L: list
    Lt: list
    N: float
    Nt: float
    constraints: dict

    @property
    def seed_ready(self):
        return all(self.constraints[k] for k in (SEED_N, SEED_NT, SEED_48))


def validate_ladder(L, Lt, nu, d, rel=1e-12):
    """Check a given pair of scale sequences display by display; raises on the first failure."""
    L = [float(v) for v in L]
    Lt = [float(v) for v in Lt]
    if not L[0] > 3.0 * math.sqrt(d):
        raise ConstraintViolation(SCALESK0, f"L0 = {L[0]} but 3*sqrt({d}) = {3 * math.sqrt(d):.6f}")
    if not (L[0] ** 3 > Lt[0] > L[0]):
        raise ConstraintViolation(SCALESK, f"L0 = {L[0]}, Lt0 = {Lt[0]}")
    for k in range(1, len(L)):
        if abs(L[k] - nu * L[k - 1]) > rel * abs(nu * L[k - 1]):
            raise ConstraintViolation(SCALESK1, f"L_{k} = {L[k]} != {nu} * {L[k - 1]}", k=k)
    for k in range(1, len(Lt)):
        if abs(Lt[k] - nu ** 3 * Lt[k - 1]) > rel * abs(nu ** 3 * Lt[k - 1]):
            raise ConstraintViolation(SCALESK2, f"Lt_{k} = {Lt[k]} != {nu}^3 * {Lt[k - 1]}", k=k)
    return True


def build_ladder(L0, Lt0, nu, k_max, d, require_seed=False):
    """Geometric scales ``L_k = nu**k L0`` and ``Lt_k = nu**(3k) Lt0``.

    Per step the seed estimate uses ``N = nu`` and ``Nt = nu**3``; with
    ``require_seed`` their hypotheses are enforced, otherwise only reported.
    """
    for name, v in (("L0", L0), ("Lt0", Lt0), ("nu", nu)):
        if not v > 0:
            raise ConstraintViolation("inputs positive", f"{name} = {v}")
    if not nu >= 2:
        raise ConstraintViolation(NU_MIN, f"nu = {nu}")
    L = [float(L0) * nu ** k for k in range(k_max + 1)]
    Lt = [float(Lt0) * nu ** (3 * k) for k in range(k_max + 1)]
    validate_ladder(L, Lt, nu, d)
    N, Nt = float(nu), float(nu) ** 3
    cons = {
        SCALESK0: True, SCALESK: True, SCALESK1: True, SCALESK2: True,
        SEED_N: _is_int(N) and N >= 2,
        SEED_NT: _is_int(Nt) and Nt > N,
        SEED_48: Nt >= 48 * N,
    }
    if require_seed:
        for key in (SEED_N, SEED_NT, SEED_48):
            if not cons[key]:
                raise ConstraintViolation(key, f"N = {N}, Nt = {Nt}")
    return ScaleLadder(float(L0), float(Lt0), float(nu), int(k_max), int(d), L, Lt, N, Nt, cons)


@dataclass(frozen=True)
class ConstantsConfig:
    d: int = 2
    kappa: float = 0.1
    beta: float = 0.8
    c1: float = 2.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    c5: float = 1.0
    c6: float = 1.0
    c7: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4", "c5", "c6", "c7", "mu", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.kappa <= 1.0 / (2 * self.d) + 1e-15:
            raise ValueError("kappa must lie in (0, 1/(2d)]")
        if not 0.5 < self.beta < 1.0:
            raise ValueError("beta must lie in (1/2, 1)")

    @property
    def ctilde(self):
        return ctilde(self.c1, self.kappa)

    @property
    def lemma_range(self):
        """Whether beta also lies in the recursion's range (3/4, 1)."""
        return 0.75 < self.beta < 1.0


@dataclass(frozen=True)
class SeedStep:
    L0: float
    Lt0: float
    L1: float
    Lt1: float
    N: int
    Nt: float

    @classmethod
    def from_ladder(cls, ladder, k=0):
        return cls(ladder.L[k], ladder.Lt[k], ladder.L[k + 1], ladder.Lt[k + 1], int(round(ladder.N)), ladder.Nt)


@dataclass
class SeedRHS:
    log_terms: tuple
    log_total: float
    note: str = CONDITIONAL

    @property
    def terms(self):
        return tuple(math.exp(t) if t > -math.inf else 0.0 for t in self.log_terms)

    @property
    def total(self):
        return math.exp(self.log_total) if self.log_total > -math.inf else 0.0


def seed_rhs_eval(constants, step, E_q0):
    """The three terms of the seed estimate's right-hand side, in log space."""
    c = constants
    d = c.d
    if not 0.0 <= E_q0 <= 1.0:
        raise ValueError("E_q0 must lie in [0, 1]")
    if not step.L0 > 3 * math.sqrt(d):
        raise HypothesisViolation(SCALESK0, f"L0 = {step.L0}")
    if not step.Lt0 > 3 * math.sqrt(d):
        raise HypothesisViolation(SEED_LT0, f"Lt0 = {step.Lt0}")
    if not step.Nt >= 48 * step.N:
        raise HypothesisViolation(SEED_48, f"N = {step.N}, Nt = {step.Nt}")
    if not step.N >= 3:
        raise HypothesisViolation(SEED_N3, f"N = {step.N}")
    N, Nt = step.N, step.Nt
    log_E = math.log(E_q0) if E_q0 > 0 else -math.inf
    log_inv_k = math.log(1.0 / c.kappa)
    base1 = (math.log(c.c2) + 3 * c.c1 * log_inv_k + (d - 1) * math.log(step.Lt1)
             + 3 * c.c1 * log_inv_k * step.L0 ** c.beta)
    t1 = math.log(N + 2) + (2 * N + 2) * base1 + N * log_E if log_E > -math.inf else -math.inf
    base2 = (math.log(c.c2) + (d - 2) * math.log(step.Lt1) + 3 * math.log(step.L1)
             - 2 * math.log(step.L0) + math.log(step.Lt0))
    t2 = (Nt / (12.0 * N)) * (base2 + log_E) if log_E > -math.inf else -math.inf
    t3 = math.log(c.c2) + math.log(N) + (d - 1) * math.log(step.Lt1) - c.mu * step.L0 ** (d * (2 * c.beta - 1))
    terms = (t1, t2, t3)
    return SeedRHS(terms, float(logsumexp([t for t in terms if t > -math.inf])))


def seed_rhs_direct(constants, step, E_q0):
    """Plain floating-point evaluation (overflows for realistic scales)."""
    c = constants
    d = c.d
    N, Nt = step.N, step.Nt
    with np.errstate(over="ignore"):
        t1 = (N + 2) * (c.c2 * c.kappa ** (-3 * c.c1) * step.Lt1 ** (d - 1)
                        * math.exp(3 * c.c1 * math.log(1 / c.kappa) * step.L0 ** c.beta)) ** (2 * N + 2) * E_q0 ** N
        t2 = (c.c2 * step.Lt1 ** (d - 2) * step.L1 ** 3 / step.L0 ** 2 * step.Lt0 * E_q0) ** (Nt / (12 * N))
        t3 = c.c2 * N * step.Lt1 ** (d - 1) * math.exp(-c.mu * step.L0 ** (d * (2 * c.beta - 1)))
    return t1, t2, t3


# --------------------------------------------------------------------------
# d_k recursion


@dataclass
class RecursionTrace:
    d0: float
    A: float
    ratio: float             # nu**-(1 - beta)
    d: list                  # d_0..d_kmax
    c8: float                # limit of d_k (decrements from k = 0)
    c8_display: float        # decrements summed from k = 1
    positive: bool
    note: str = CONDITIONAL

    def to_dict(self):
        return asdict(self)


def recursion_decrement(constants, L0):
    c = constants
    return (1.0 + 3.0 * c.c1 * math.log(1.0 / c.kappa)) * L0 ** c.beta + 3.0


def dk_sequence(constants, nu, L0, k_max, d0=None):
    c = constants
    if not nu > 1:
        raise ValueError("nu must exceed 1")
    if not c.lemma_range:
        raise ValueError("beta must lie in (3/4, 1) for the recursion")
    if d0 is None:
        d0 = c.c7 / L0 ** ((1.0 - c.beta) / 2.0)
    A = recursion_decrement(c, L0)
    r = nu ** (-(1.0 - c.beta))
    seq = [float(d0)]
    for k in range(k_max):
        seq.append(seq[-1] - A * r ** k)
    c8 = d0 - A / (1.0 - r)
    c8_disp = d0 - A * r / (1.0 - r)
    return RecursionTrace(float(d0), A, r, seq, c8, c8_disp, c8 > 0)


def brute_force_tail(A, r, terms, start=0):
    return math.fsum(A * r ** k for k in range(start, start + terms))


# --------------------------------------------------------------------------
# per-environment verification


@dataclass
class Check:
    name: str
    lhs: float
    rhs_lower: float
    rhs_upper: float
    ok: bool           # certainly satisfied
    violation: bool    # certainly violated
    margin: float
    detail: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _check(name, lhs, rhs_lo, rhs_hi, tol, detail=None):
    return Check(name, float(lhs), float(rhs_lo), float(rhs_hi), bool(lhs <= rhs_lo + tol),
                 bool(lhs > rhs_hi + tol), float(rhs_lo - lhs), detail or [])


@dataclass
class ChainReport:
    seed: int
    in_T: object            # True / False / None (undecided)
    quenine: Check
    supermartingale: Check
    eqcom: Check | None
    excursion: Check | None
    typical_min: float | None = None
    typical_threshold: float | None = None
    witness: list | None = None

    def to_dict(self):
        out = {
            "seed": self.seed,
            "in_T": self.in_T,
            "quenine": {"lhs": self.quenine.lhs, "rhs": self.quenine.rhs_lower, "rhs_upper": self.quenine.rhs_upper,
                        "ok": self.quenine.ok, "violation": self.quenine.violation},
            "supermartingale": self.supermartingale.to_dict(),
            "eqcom": None if self.eqcom is None else self.eqcom.to_dict(),
            "excursion": None if self.excursion is None else self.excursion.to_dict(),
            "margins": {
                "quenine": self.quenine.margin,
                "supermartingale": self.supermartingale.margin,
                "eqcom": None if self.eqcom is None else self.eqcom.margin,
                "excursion": None if self.excursion is None else self.excursion.margin,
            },
            "typical": {"min_front_exit": self.typical_min, "threshold": self.typical_threshold,
                        "witness": self.witness},
        }
        return out


def excursion_return_sup(env, geom, i):
    """``sup`` over the frontal boundary of ``H'_i`` of the probability to come
    back to ``H_i`` strictly before the lateral exit time and before ``H_{i+1}``."""
    f = geom.frame
    s, s1 = geom.level(i), geom.level(i + 1)
    cand = f.window(s, s1, geom.Lt1)
    u = f.u(cand)
    ok = (u > s) & (u < s1) & ~straddles(f, cand, s) & ~straddles(f, cand, s1) & f.lateral_inside(cand, geom.Lt1)
    interior = cand[ok]

    def classify(b):
        lab = np.ones(len(b), dtype=np.int64)
        lab[straddles(f, b, s) & f.lateral_inside(b, geom.Lt1)] = 0
        return lab

    sol = solve_domain(AbsorbingProblem.from_classifier(env, interior, classify, ("return", "other")))
    starts = cand[frontal_boundary(f, cand, s) & f.lateral_inside(cand, geom.Lt1)]
    return float(sol.at(starts)[:, 0].max())


def verify_quenched_chain(env, geom, N, constants, tol=1e-9, seed=None):
    """Evaluate the constant-free inequalities of the seed-estimate argument on one environment.

    * quenine: back exit of the box ``|x.l| < N L0``, ``|lateral| < Lt1`` before
      the lateral exit time is at most ``f(0)/f(-N)``;
    * supermartingale: ``f(i+1) p_hat(x) + f(i-1) q_hat(x) <= f(i)`` on ``H'_i``;
    * eqcom (only on the typical event): ``q_hat(x) <= exp(2 ct L0**beta) sup_{H'_i} q_tilde``;
    * excursion (only on the typical event): return probability from the
      frontal boundary at most ``1 - exp(-2 ct L0**beta)``.

    A check is a violation only when certain given every bracket.
    """
    c = constants
    beta = c.beta
    try:
        typ = typical_event_check(env, beta, N, geom, c.c1, c.kappa)
        in_T = bool(typ.member)
    except BracketNotTight:
        typ, in_T = None, None
    prof = rho_f_profile(env, N, geom)
    lhs = back_exit_probability(env, geom, N * geom.L0)
    quenine = _check("quenine", lhs, prof.ratio.lower, prof.ratio.upper, tol)

    # one-step drift of f along the level chain, under both ends of the rho bracket
    worst_lo, worst_hi, detail = -math.inf, -math.inf, []
    f_a, f_b = prof.f_values("lower"), prof.f_values("upper")
    for i in range(-N + 1, N + 1):
        a = prof.levels[i]
        da = f_a[i + 1] * a.p_hat + f_a[i - 1] * a.q_hat - f_a[i]
        db = f_b[i + 1] * a.p_hat + f_b[i - 1] * a.q_hat - f_b[i]
        worst = min(float(da.max()), float(db.max()))
        worst_lo = max(worst_lo, worst)
        worst_hi = max(worst_hi, float(max(da.max(), db.max())))
        detail.append({"level": i, "max_drift": float(max(da.max(), db.max()))})
    sm = Check("supermartingale", worst_lo, 0.0, 0.0, bool(worst_hi <= tol), bool(worst_lo > tol), -worst_hi, detail)

    eqcom = excursion = None
    factor = math.exp(2.0 * c.ctilde * geom.L0 ** beta)
    if in_T:
        levels, worst, ok, viol = [], None, True, False
        for i in range(-N + 1, N + 2):
            qh = float(prof.levels[i].q_hat.max())
            sup = tilde_q_level(env, geom, i).sup
            r_lo, r_hi = factor * sup.lower, factor * sup.upper
            ok &= qh <= r_lo + tol
            viol |= qh > r_hi + tol
            if worst is None or r_lo - qh < worst[0]:
                worst = (r_lo - qh, qh, r_lo, r_hi)
            levels.append({"level": i, "q_hat_max": qh, "tilde_sup": [sup.lower, sup.upper]})
        # lhs and rhs are reported at the level with the smallest margin
        eqcom = Check("eqcom", worst[1], worst[2], worst[3], ok, viol, worst[0], levels)
        bound = 1.0 - math.exp(-2.0 * c.ctilde * geom.L0 ** beta)
        sups = [excursion_return_sup(env, geom, i) for i in range(-N, N + 1)]
        excursion = _check("excursion", max(sups), bound, bound, tol)
        excursion.detail = [{"level": i, "sup": v} for i, v in zip(range(-N, N + 1), sups)]
    return ChainReport(env.seed if seed is None else seed, in_T, quenine, sm, eqcom, excursion,
                       None if typ is None else typ.min_lower, None if typ is None else typ.threshold,
                       None if typ is None or typ.witness is None else list(typ.witness))
