"""Closed-form gambler's ruin with site-dependent jump probabilities.

States ``0..n``, absorbing at ``0`` and ``n``; from ``0 < j < n`` the walk jumps
right with probability ``p_j``.  With ``rho_j = (1 - p_j) / p_j``,

    P_m[hit 0 before n] = sum_{j=m}^{n-1} prod_{i<=j} rho_i / sum_{j=0}^{n-1} prod_{i<=j} rho_i.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class RuinProblem:
    p: tuple  # right-jump probabilities at states 1..n-1
    start: int
    kappa: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", tuple(map(float, p)))
        n = len(p) + 1
        if n < 2:
            raise ValueError("need at least two states")
        if not 0 < self.start < n:
            raise ValueError("start must satisfy 0 < m < n")
        if p.size and (p.min() < max(self.kappa, 0.0) or p.max() > 1.0 - self.kappa or p.min() <= 0 or p.max() >= 1):
            raise ValueError("right probabilities must lie in [kappa, 1 - kappa] and in (0, 1)")

    @property
    def n(self):
        return len(self.p) + 1


@dataclass
class RuinSolution:
    absorb_left: float
    absorb_right: float
    log_products: np.ndarray  # log prod_{i<=j} rho_i, j = 0..n-1 (j = 0 is the empty product)

    @property
    def products(self):
        return np.exp(self.log_products)


def gambler_ruin_exact(problem):
    """Absorption probabilities at 0 and at n, plus the rho-product ladder."""
    p = np.asarray(problem.p)
    log_rho = np.log1p(-p) - np.log(p)
    S = np.concatenate([[0.0], np.cumsum(log_rho)])  # S[j] = log prod_{i=1}^{j} rho_i
    m = problem.start
    den = logsumexp(S)
    left = float(np.exp(logsumexp(S[m:]) - den))
    right = float(np.exp(logsumexp(S[:m]) - den))
    return RuinSolution(left, right, S)


def homogeneous_ruin(p, n, m):
    """P_m[hit 0 before n] for constant right probability ``p``."""
    return gambler_ruin_exact(RuinProblem((p,) * (n - 1), m)).absorb_left
