"""Finite-scale diagnostics for the ballisticity conditions.

The conditions themselves are asymptotic; every verdict produced here is an
empirical statement at the scales actually computed and says so in its
metadata.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TooFewScales
from .geometry import BoundaryClass, Direction, Frame, build_rotation
from .walks import EXACT, EventSpec, StopSpec, estimate_probability

EMPIRICAL_NOTE = "empirical finite-scale diagnostic, not a proof"


@dataclass(frozen=True)
class EstimationConfig:
    n_env: int = 1
    walks_per_env: object = EXACT
    confidence: float = 0.95
    seed: int = 0
    method: str = "wilson"
    threads: int = 1


@dataclass
class ConditionVerdict:
    condition: str
    params: dict
    estimate: float
    ci_lower: float
    ci_upper: float
    threshold: float
    verdict: str  # "pass" | "fail" | "inconclusive"
    margin: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def polynomial_verdict(lower, upper, threshold):
    if upper < threshold:
        return "pass"
    if lower > threshold:
        return "fail"
    return "inconclusive"


def slab_back_exit(law, direction, L, config):
    event = EventSpec(StopSpec.slab(direction, L), BoundaryClass.NEGATIVE)
    return estimate_probability(law, event, config.n_env, config.walks_per_env, config.confidence,
                                config.seed, config.method, config.threads)


def polynomial_condition_check(law, direction, M, L, config=EstimationConfig()):
    """Compare the annealed back-exit probability of the slab ``|x.l| < L``
    with ``L**-M``."""
    if not M > 0:
        raise ValueError("M must be positive")
    direction = direction if isinstance(direction, Direction) else Direction(tuple(direction))
    est = slab_back_exit(law, direction, L, config)
    thr = float(L) ** (-float(M))
    d = law.d
    meta = {
        "d": d,
        "mode": est.mode,
        "n": est.n,
        "M_ge_15d_plus_5": bool(M >= 15 * d + 5),
        "note": EMPIRICAL_NOTE,
    }
    return ConditionVerdict("(P)_M", {"M": float(M), "L": float(L), "direction": list(direction.components)},
                            est.estimate, est.lower, est.upper, thr,
                            polynomial_verdict(est.lower, est.upper, thr), thr - est.estimate, meta)


# --------------------------------------------------------------------------
# decay fits


@dataclass
class DecayFit:
    scales: list
    probabilities: list
    ci: list                # (lo, hi) per scale, may be empty for synthetic input
    gammas: list
    rates: list
    residuals: list         # RMS residual of -log p, comparable across gammas
    best_gamma: float
    exponential_rate: float | None
    verdict: str
    intercepts: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def fit_through_origin(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    rate = float(x @ y / (x @ x))
    resid = float(np.sqrt(np.mean((y - rate * x) ** 2)))
    return rate, resid


def fit_decay(scales, probabilities, gammas=(0.25, 0.5, 0.75, 1.0), residual_threshold=0.05,
              intercept=False, ci=()):
    """Least-squares fit of ``-log p(L) = rate * L**gamma`` for each gamma.

    ``residual_threshold`` is relative to the mean of ``-log p``.  With
    ``intercept=True`` an affine fit is also reported (diagnostic only).
    """
    L = np.asarray(scales, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if L.size < 3:
        raise TooFewScales("decay fit needs at least 3 scales", m=int(L.size))
    if np.any(np.diff(L) <= 0):
        raise ValueError("scales must be strictly increasing")
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in (0, 1]")
    y = -np.log(p)
    rates, resids, inters = [], [], []
    for g in gammas:
        x = L ** g
        r, e = fit_through_origin(x, y)
        rates.append(r)
        resids.append(e)
        if intercept:
            A = np.column_stack([np.ones_like(x), x])
            coef, *_ = np.linalg.lstsq(A, y, rcond=None)
            inters.append([float(coef[0]), float(coef[1])])
    best = int(np.argmin(resids))
    exp_rate = None
    verdict = "fail"
    if 1.0 in gammas:
        k = list(gammas).index(1.0)
        exp_rate = rates[k]
        scale = float(np.mean(y)) if np.mean(y) > 0 else 1.0
        if exp_rate > 0 and resids[k] <= residual_threshold * scale:
            verdict = "pass"
    return DecayFit(L.tolist(), p.tolist(), [list(c) for c in ci], list(map(float, gammas)), rates, resids,
                    float(gammas[best]), exp_rate, verdict, inters,
                    {"residual_threshold": residual_threshold, "note": EMPIRICAL_NOTE})


def decay_fit(law, direction, scales, gammas=(0.25, 0.5, 0.75, 1.0), config=EstimationConfig(),
              residual_threshold=0.05):
    """Estimate the slab back-exit probability at every scale and fit its decay."""
    if len(scales) < 3:
        raise TooFewScales("decay fit needs at least 3 scales", m=len(scales))
    ests = [slab_back_exit(law, direction, L, config) for L in scales]
    fit = fit_decay(scales, [e.estimate for e in ests], gammas, residual_threshold,
                    ci=[(e.lower, e.upper) for e in ests])
    fit.metadata["mode"] = ests[0].mode
    return fit


# --------------------------------------------------------------------------
# direction cones

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def cone_directions(direction, half_angle, k):
    """``k`` unit directions within ``half_angle`` of ``direction``.

    d = 2: angles evenly spaced on ``[-half_angle, half_angle]``.  d >= 3: a
    Fibonacci spiral on the cap, polar angle ``half_angle * sqrt((j + 1/2)/k)``
    and azimuth ``j * golden angle`` in the plane of the rotation's second and
    third columns.  A zero half-angle or ``k = 1`` gives ``direction`` alone.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0.0 <= half_angle <= math.pi / 4 + 1e-15:
        raise ValueError("half-angle must lie in [0, pi/4]")
    direction = direction if isinstance(direction, Direction) else Direction(tuple(direction))
    ell = direction.vector
    d = ell.size
    if half_angle == 0.0 or k == 1 or d == 1:
        return [direction]
    R = build_rotation(direction)
    out = []
    for j in range(k):
        if d == 2:
            a = -half_angle + 2.0 * half_angle * j / (k - 1)
            v = math.cos(a) * ell + math.sin(a) * R[:, 1]
        else:
            theta = half_angle * math.sqrt((j + 0.5) / k)
            phi = j * GOLDEN_ANGLE
            v = math.cos(theta) * ell + math.sin(theta) * (math.cos(phi) * R[:, 1] + math.sin(phi) * R[:, 2])
        out.append(Direction(tuple(v / np.linalg.norm(v))))
    return out


def direction_scan(law, direction, half_angle, k, check):
    """Run ``check(law, direction)`` for every direction of the cone."""
    return [(dv, check(law, dv)) for dv in cone_directions(direction, half_angle, k)]
