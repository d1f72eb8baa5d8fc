"""Quenched exit quantities of the level-crossing construction.

Everything here is an exact absorbing-chain solve (:mod:`rwre.solver`) on a
finite domain.  Quantities whose event is not laterally bounded are returned
as :class:`Bracket` objects obtained from two readings of a lateral
truncation: exit through the artificial lateral wall counted as failure (lower
bound) or as success (upper bound).  The wall is pushed out by doubling until
the bracket is tight.

Level ``i`` sits at ``s_i = i * L0`` along ``frame.ell``; ``H_i`` is the set of
sites straddling it (see :func:`rwre.geometry.straddles`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import BracketNotTight, StartOutsideBox
from .geometry import (BoundaryClass, Frame, HyperplaneFamily, Variant, box_sites_and_boundary,
                       frontal_boundary, level_index, straddles)
from .solver import AbsorbingProblem, solve_domain, solve_exit_distribution


@dataclass(frozen=True)
class Bracket:
    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        # solver round-off can push a probability a few ulps outside [0, 1]
        lo, hi = min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)
        if lo > hi:
            if lo - hi > 1e-9:
                raise ValueError(f"bracket lower {lo} exceeds upper {hi}")
            lo = hi = 0.5 * (lo + hi)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, v):
        return cls(v, v)

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)

    def within(self, other, slack=1e-12):
        """True when this bracket is nested inside ``other``."""
        return self.lower >= other.lower - slack and self.upper <= other.upper + slack


@dataclass(frozen=True)
class Interval:
    """Two-sided bound on a positive quantity that need not be a probability."""

    lower: float
    upper: float

    @property
    def width(self):
        return self.upper - self.lower


@dataclass(frozen=True)
class SlabGeometry:
    """Direction, level spacing ``L0`` and lateral bound ``Lt1`` of the construction.

    ``ext0``/``ext_cap`` control the artificial lateral walls used for brackets
    (defaults ``8 L0`` and ``128 L0``); ``bracket_tol`` is the target width.
    ``index_direction`` is the direction used by the level-index map; it
    defaults to the frame direction.
    """

    frame: Frame
    L0: float
    Lt1: float
    bracket_tol: float = 1e-9
    ext0: float | None = None
    ext_cap: float | None = None
    index_direction: object = None

    @classmethod
    def create(cls, direction, L0, Lt1, **kw):
        frame = direction if isinstance(direction, Frame) else Frame(direction)
        return cls(frame, float(L0), float(Lt1), **kw)

    def level(self, i):
        return i * self.L0

    def index(self, x):
        ell = self.frame.direction if self.index_direction is None else self.index_direction
        return level_index(x, ell, self.L0)

    def extensions(self):
        e = 8.0 * self.L0 if self.ext0 is None else float(self.ext0)
        cap = 128.0 * self.L0 if self.ext_cap is None else float(self.ext_cap)
        while True:
            yield e
            if e >= cap:
                return
            e = min(2.0 * e, cap)

    def truncated(self):
        return HyperplaneFamily(self.frame, self.L0, Variant.TRUNCATED, self.Lt1)

    def shifted_beta(self, beta):
        return HyperplaneFamily(self.frame, self.L0, Variant.SHIFTED_BETA, self.Lt1, beta)

    def level_sites(self, i):
        """``H'_i``: members of ``H_i`` with every lateral coordinate below ``Lt1``."""
        return self.truncated().sites(i)


# --------------------------------------------------------------------------
# domains


def _band_solution(env, geom, i, half_width, center=None):
    """Walk started between the walls ``H_{i-1}`` and ``H_{i+1}``.

    Classes: 0 back wall, 1 front wall, 2 lateral truncation.
    """
    f = geom.frame
    lo, hi = geom.level(i - 1), geom.level(i + 1)
    cand = f.window(lo, hi, half_width, center)
    u = f.u(cand)
    ok = (u > lo) & (u < hi) & ~straddles(f, cand, lo) & ~straddles(f, cand, hi)
    ok &= f.lateral_inside(cand, half_width, center)
    interior = cand[ok]

    def classify(b):
        lab = np.full(len(b), 2, dtype=np.int64)
        lab[straddles(f, b, hi)] = 1
        lab[straddles(f, b, lo)] = 0
        return lab

    prob = AbsorbingProblem.from_classifier(env, interior, classify, ("back", "front", "lateral"))
    return solve_domain(prob)


def _tilde_solution(env, geom, i, half_width, center=None):
    """Walk from ``H_i`` absorbed at ``H_{i-1}`` (0), the frontal boundary of
    ``H_i`` (1) or the lateral truncation (2)."""
    f = geom.frame
    lo, s = geom.level(i - 1), geom.level(i)
    cand = f.window(lo, s + f.max_step, half_width, center)
    u = f.u(cand)
    in_h = straddles(f, cand, s)
    ok = (u > lo) & ~straddles(f, cand, lo) & ((u <= s) | in_h) & ~frontal_boundary(f, cand, s)
    ok &= f.lateral_inside(cand, half_width, center)
    interior = cand[ok]

    def classify(b):
        lab = np.full(len(b), 2, dtype=np.int64)
        lab[frontal_boundary(f, b, s)] = 1
        lab[straddles(f, b, lo)] = 0
        return lab

    prob = AbsorbingProblem.from_classifier(env, interior, classify, ("back", "front", "lateral"))
    return solve_domain(prob)


def _slab_solution(env, frame, lower, upper, half_width, center=None):
    """Exit of ``{lower < x.l < upper}`` truncated laterally.  Classes: 0 back
    (``x.l <= lower``), 1 front (``x.l >= upper``), 2 lateral."""
    cand = frame.window(lower, upper, half_width, center)
    u = frame.u(cand)
    interior = cand[(u > lower) & (u < upper) & frame.lateral_inside(cand, half_width, center)]

    def classify(b):
        ub = frame.u(b)
        lab = np.full(len(b), 2, dtype=np.int64)
        lab[ub >= upper] = 1
        lab[ub <= lower] = 0
        return lab

    prob = AbsorbingProblem.from_classifier(env, interior, classify, ("back", "front", "lateral"))
    return solve_domain(prob)


def _max_lateral(frame, sites):
    lat = frame.lateral(sites)
    return float(np.abs(lat).max()) if lat.size else 0.0


# --------------------------------------------------------------------------
# boxes and slabs


def box_failure_probability(env, box, start=None):
    """``1 - P_start[exit the box through its positive side]``."""
    d = box.frame.d
    start = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    if not box.inside(start[None, :])[0]:
        raise StartOutsideBox("start site is not inside the box", start=start.tolist())
    bs = box_sites_and_boundary(box)
    prob = AbsorbingProblem(env, bs.interior, bs.boundary, bs.labels,
                            tuple(c.name.lower() for c in BoundaryClass), start[None, :])
    dist = solve_exit_distribution(prob)
    return 1.0 - dist.probs[0, int(BoundaryClass.POSITIVE)]


def slab_exit_bracket(env, frame, lower, upper, start=None, tol=1e-9, rtol=0.0, ext0=None, ext_cap=None):
    """Bracket on ``P_start[leave {lower < x.l < upper} through x.l <= lower]``.

    The slab has no lateral bound; widening stops once the width is at most
    ``max(tol, rtol * lower_bound)``.
    """
    d = frame.d
    start = np.zeros((1, d), dtype=np.int64) if start is None else np.asarray(start, np.int64).reshape(1, d)
    width = float(upper - lower)
    if d == 1:
        sol = _slab_solution(env, frame, lower, upper, 1.0)
        v = float(sol.at(start)[0, 0])
        return Bracket.point(v)
    base = _max_lateral(frame, start)
    e = 8.0 * width if ext0 is None else float(ext0)
    cap = 128.0 * width if ext_cap is None else float(ext_cap)
    last = None
    while True:
        sol = _slab_solution(env, frame, lower, upper, base + e)
        back, _, lat = sol.at(start)[0]
        last = Bracket(back, back + lat)
        if last.width <= max(tol, rtol * last.lower):
            return last
        if e >= cap:
            raise BracketNotTight("lateral truncation cap reached", width=last.width, extension=e)
        e = min(2.0 * e, cap)


def back_exit_probability(env, geom, L1):
    """``P_0[back side of {|x.l| < L1} reached strictly before the lateral
    exit time and before the front side]`` on the box of half-width ``Lt1``."""
    from .geometry import BoxTriple

    box = BoxTriple(geom.frame, float(L1), geom.Lt1)
    bs = box_sites_and_boundary(box)
    d = geom.frame.d
    prob = AbsorbingProblem(env, bs.interior, bs.boundary, bs.labels,
                            tuple(c.name.lower() for c in BoundaryClass), np.zeros((1, d), np.int64))
    return float(solve_exit_distribution(prob).probs[0, int(BoundaryClass.NEGATIVE)])


# --------------------------------------------------------------------------
# level crossings


@dataclass
class LevelCrossing:
    """Crossing probabilities from one site: to the back wall (``q``), to the
    front wall (``p = 1 - q``) and the same events before the lateral exit time
    (``q_hat``, ``p_hat``)."""

    q: Bracket
    p: Bracket
    q_hat: float
    p_hat: float


@dataclass
class LevelArrays:
    """Crossing quantities at every site of ``H'_i`` for one level."""

    i: int
    sites: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray
    q_hat: np.ndarray
    p_hat: np.ndarray
    extension: float

    @property
    def p_lo(self):
        return 1.0 - self.q_hi

    @property
    def p_hi(self):
        return 1.0 - self.q_lo


def crossing_arrays(env, geom, i, sites=None):
    """``q``-brackets and exact ``q_hat``, ``p_hat`` for ``sites`` (default ``H'_i``)."""
    f = geom.frame
    if sites is None:
        sites = geom.level_sites(i)
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, f.d)
    inside = f.lateral_inside(sites, geom.Lt1)
    q_hat = np.zeros(len(sites))
    p_hat = np.zeros(len(sites))
    if inside.any():
        hat = _band_solution(env, geom, i, geom.Lt1).at(sites[inside])
        q_hat[inside], p_hat[inside] = hat[:, 0], hat[:, 1]
    if f.d == 1:
        return LevelArrays(i, sites, q_hat.copy(), q_hat.copy(), q_hat, p_hat, 0.0)
    base = max(geom.Lt1, _max_lateral(f, sites))
    for e in geom.extensions():
        vals = _band_solution(env, geom, i, base + e).at(sites)
        q_lo = vals[:, 0]
        q_hi = vals[:, 0] + vals[:, 2]
        width = float(np.max(q_hi - q_lo)) if len(sites) else 0.0
        if width <= geom.bracket_tol and np.all(q_hi < 1.0):
            return LevelArrays(i, sites, q_lo, np.minimum(q_hi, 1.0), q_hat, p_hat, e)
    raise BracketNotTight("q/p bracket did not reach the requested width", level=i, width=width, extension=e)


def level_crossing_probabilities(env, x, geom):
    """``(q, p, q_hat, p_hat)`` at site ``x`` with ``i = I(x)``."""
    x = np.asarray(x, dtype=np.int64).reshape(1, -1)
    i = int(geom.index(x[0]))
    f = geom.frame
    u = float(f.u(x)[0])
    if not (u > geom.level(i - 1) and u < geom.level(i + 1)) or straddles(f, x, geom.level(i - 1))[0] \
            or straddles(f, x, geom.level(i + 1))[0]:
        raise ValueError("site must lie strictly between H_{I(x)-1} and H_{I(x)+1}")
    a = crossing_arrays(env, geom, i, x)
    q = Bracket(a.q_lo[0], a.q_hi[0])
    return LevelCrossing(q, Bracket(1.0 - q.upper, 1.0 - q.lower), float(a.q_hat[0]), float(a.p_hat[0]))


# --------------------------------------------------------------------------
# backward crossing without touching the frontal boundary


def tilde_q_bracket(env, x, geom, rho_c=None):
    """Bracket on ``P_x[reach H_{i-1} before the frontal boundary of H_i]``,
    ``i = I(x)``, with lateral confinement of radius ``rho_c`` around ``x``."""
    f = geom.frame
    x = np.asarray(x, dtype=np.int64).reshape(1, -1)
    i = int(geom.index(x[0]))
    rho_c = 8.0 * geom.L0 if rho_c is None else float(rho_c)
    if rho_c < geom.L0:
        raise ValueError("confinement radius must be at least L0")
    if not straddles(f, x, geom.level(i))[0]:
        raise ValueError("x must belong to H_{I(x)}")
    center = f.lateral(x)[0] if f.d > 1 else None
    back, _, lat = _tilde_solution(env, geom, i, rho_c, center).at(x)[0]
    if f.d == 1:
        return Bracket.point(back)
    return Bracket(back, back + lat)


@dataclass
class TildeLevel:
    i: int
    sites: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    radius: float

    @property
    def sup(self):
        """Bracket on ``sup_{y in H'_i}`` of the backward-crossing probability."""
        return Bracket(float(self.lower.max()), float(self.upper.max()))

    @property
    def sup_mid(self):
        return float((0.5 * (self.lower + self.upper)).max())


def tilde_q_level(env, geom, i, rho_c=None, sites=None):
    """Brackets at every ``y`` in ``H'_i`` from one solve whose lateral extent
    ``Lt1 + rho_c`` contains each site's confinement box.  ``rho_c`` doubles
    from ``8 L0`` until the widest bracket is below ``geom.bracket_tol``, unless
    a fixed ``rho_c`` is given."""
    f = geom.frame
    if sites is None:
        sites = geom.level_sites(i)
    radii = [float(rho_c)] if rho_c is not None else list(geom.extensions())
    base = max(geom.Lt1, _max_lateral(f, sites))
    for r in radii:
        vals = _tilde_solution(env, geom, i, base + r).at(sites)
        lo = vals[:, 0]
        hi = vals[:, 0] + (vals[:, 2] if f.d > 1 else 0.0)
        if rho_c is not None or np.max(hi - lo) <= geom.bracket_tol:
            return TildeLevel(i, sites, lo, np.minimum(hi, 1.0), r)
    raise BracketNotTight("backward-crossing bracket did not reach the requested width",
                          level=i, width=float(np.max(hi - lo)))


# --------------------------------------------------------------------------
# rho-hat and f


def _log_f(log_rho, N):
    """``log f(j)`` for ``j = -N..N+2`` given ``log_rho[i]`` for ``i = -N+1..N+1``."""
    # neg[m] = -sum_{m < i <= N+1} log rho(i), for m = -N..N+1
    ms = list(range(-N, N + 2))
    neg = {}
    acc = 0.0
    for m in reversed(ms):
        neg[m] = acc
        if m > -N:
            acc -= log_rho[m]
    out = {}
    for j in range(-N, N + 3):
        terms = [neg[m] for m in range(j, N + 2)]
        out[j] = logsumexp(terms) if terms else -math.inf
    return out


def f_from_rho(rho, N):
    """``f(j)`` for ``j = -N..N+2`` from a mapping ``i -> rho(i)``, ``i = -N+1..N+1``."""
    lf = _log_f({i: math.log(rho[i]) for i in range(-N + 1, N + 2)}, N)
    return {j: math.exp(v) for j, v in lf.items()}


def ratio_from_rho(rho, N):
    """``f(0) / f(-N)``."""
    lf = _log_f({i: math.log(rho[i]) for i in range(-N + 1, N + 2)}, N)
    return math.exp(lf[0] - lf[-N])


@dataclass
class RhoFProfile:
    N: int
    rho: dict          # i -> Interval, i = -N+1..N+1
    f: dict            # j -> Interval, j = -N..N+2
    ratio: Interval    # f(0)/f(-N); increasing in every rho(i)
    levels: dict = field(default_factory=dict, repr=False)  # i -> LevelArrays

    def f_values(self, end):
        return {j: getattr(b, end) for j, b in self.f.items()}


def rho_hat_level(a):
    """Interval on ``max_x q_hat(x) / p(x)`` over the sites of ``a``."""
    if np.any(a.p_lo <= 0):
        raise BracketNotTight("lower bracket of p is zero", level=a.i)
    return Interval(float(np.max(a.q_hat / a.p_hi)), float(np.max(a.q_hat / a.p_lo)))


def rho_f_profile(env, N, geom):
    if N < 2:
        raise ValueError("N must be at least 2")
    levels, rho = {}, {}
    for i in range(-N + 1, N + 2):
        a = crossing_arrays(env, geom, i)
        if np.any(a.p_lo <= 0):
            raise BracketNotTight("lower bracket of p is zero", level=i)
        levels[i] = a
        rho[i] = rho_hat_level(a)
    return profile_from_rho(rho, N, levels)


def profile_from_rho(rho, N, levels=None):
    lo = _log_f({i: math.log(r.lower) for i, r in rho.items()}, N)
    hi = _log_f({i: math.log(r.upper) for i, r in rho.items()}, N)
    # f is decreasing in every rho, so the upper rho end gives the lower f end
    # ordering the ends absorbs round-off when the rho interval is a point
    f = {j: Interval(*sorted((math.exp(hi[j]), math.exp(lo[j])))) for j in lo}
    ratio = Interval(*sorted((math.exp(lo[0] - lo[-N]), math.exp(hi[0] - hi[-N]))))
    return RhoFProfile(N, rho, f, ratio, levels or {})


# --------------------------------------------------------------------------
# typical quenched exit event


def ctilde(c1, kappa):
    return c1 * math.log(1.0 / kappa)


@dataclass
class TypicalEventResult:
    member: bool
    threshold: float
    min_lower: float
    witness: tuple | None
    witness_prob: Bracket | None
    n_sites: int


def typical_event_sites(geom, beta, N):
    fam_b = geom.shifted_beta(beta)
    fam_t = geom.truncated()
    parts = [fam_b.sites(i) for i in range(-N, N + 3)] + [fam_t.sites(i) for i in range(-N, N + 3)]
    return np.unique(np.concatenate(parts), axis=0)


def front_exit_brackets(env, geom, beta, sites):
    """For each ``z``: bracket on ``P_z[exit z + {-L0**beta < x.l < L0} at the front]``."""
    f = geom.frame
    back_len = geom.L0 ** beta
    u = np.round(f.u(sites), 12)
    lo = np.zeros(len(sites))
    hi = np.zeros(len(sites))
    base = max(geom.Lt1, _max_lateral(f, sites))
    for uz in np.unique(u):
        sel = np.nonzero(u == uz)[0]
        for e in geom.extensions():
            if f.d == 1:
                sol = _slab_solution(env, f, uz - back_len, uz + geom.L0, 1.0)
            else:
                sol = _slab_solution(env, f, uz - back_len, uz + geom.L0, base + e)
            vals = sol.at(sites[sel])
            lo[sel] = vals[:, 1]
            hi[sel] = vals[:, 1] + (vals[:, 2] if f.d > 1 else 0.0)
            if f.d == 1 or np.max(hi[sel] - lo[sel]) <= geom.bracket_tol:
                break
    return lo, np.minimum(hi, 1.0)


def typical_event_check(env, beta, N, geom, c1=2.0, kappa=None):
    """Membership of ``env`` in the typical quenched exit event.

    Every ``z`` in ``H_{i,beta}`` or ``H'_i``, ``-N <= i <= N+2``, must leave the
    asymmetric slab ``z + {-L0**beta < x.l < L0}`` through its front with
    probability above ``exp(-c1 log(1/kappa) L0**beta)``.
    """
    if not 0.5 < beta < 1.0:
        raise ValueError("beta must lie in (1/2, 1)")
    kappa = env.law.kappa if kappa is None else kappa
    thr = math.exp(-ctilde(c1, kappa) * geom.L0 ** beta)
    sites = typical_event_sites(geom, beta, N)
    if len(sites) == 0:
        raise ValueError("no sites to check")
    lo, hi = front_exit_brackets(env, geom, beta, sites)
    k = int(np.argmin(lo))
    if lo[k] > thr:
        return TypicalEventResult(True, thr, float(lo[k]), tuple(sites[k].tolist()), Bracket(lo[k], hi[k]), len(sites))
    bad = np.nonzero(hi <= thr)[0]
    if len(bad):
        k = int(bad[np.argmin(hi[bad])])
        return TypicalEventResult(False, thr, float(lo.min()), tuple(sites[k].tolist()),
                                  Bracket(lo[k], hi[k]), len(sites))
    raise BracketNotTight("front-exit bracket straddles the threshold", site=sites[k].tolist(),
                          lower=float(lo[k]), upper=float(hi[k]), threshold=thr)
