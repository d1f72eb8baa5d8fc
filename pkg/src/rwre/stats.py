"""Confidence intervals for Monte Carlo and per-environment averages."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class EstimateCI:
    estimate: float
    lower: float
    upper: float
    confidence: float
    n: int
    method: str   # "wilson" | "clopper-pearson" | "normal"
    mode: str     # "mc" | "exact"
    n_env: int = 0
    n_walk: int = 0
    successes: int | None = None

    def __post_init__(self):
        if not self.lower <= self.estimate <= self.upper:
            raise ValueError("CI must contain the point estimate")

    @property
    def width(self):
        return self.upper - self.lower

    def covers(self, value):
        return self.lower <= value <= self.upper

    def to_dict(self):
        return asdict(self)


def binomial_ci(k, n, confidence=0.95, method="wilson"):
    """``(lower, upper)`` for a binomial proportion; Wilson score or Clopper-Pearson."""
    if n <= 0:
        raise ValueError("n must be positive")
    m = {"wilson": "wilson", "clopper-pearson": "exact"}[method]
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method=m)
    lo, hi = float(ci.low), float(ci.high)
    p = k / n
    return min(lo, p), max(hi, p)


def normal_ci(lower_vals, upper_vals, confidence=0.95, deterministic=False):
    """Mean of per-environment brackets with a normal-approximation band.

    Returns ``(point, lower, upper)``.  The band is built on the midpoints'
    sample standard deviation and then widened by the mean bracket ends.  A
    deterministic law gives a zero-width band; a single random environment
    gives the trivial band ``[0, 1]``.
    """
    lo = np.asarray(lower_vals, dtype=float)
    hi = np.asarray(upper_vals, dtype=float)
    n = lo.size
    mid = 0.5 * (lo + hi)
    point = math.fsum(mid) / n
    mean_lo = math.fsum(lo) / n
    mean_hi = math.fsum(hi) / n
    if deterministic:
        # every replica is the same environment; the bracket width is solver round-off
        return point, point, point
    if n == 1:
        return point, 0.0, 1.0
    centered = mid - point
    sd = math.sqrt(math.fsum(centered * centered) / (n - 1))
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    half = z * sd / math.sqrt(n)
    return point, float(max(0.0, mean_lo - half)), float(min(1.0, mean_hi + half))
