"""Exact absorption probabilities of the nearest-neighbour chain on finite domains.

For an interior set ``D`` with outer boundary partitioned into classes, the
vector ``h_c(x) = P_{x,omega}[X_{T_D} in class c]`` solves

    h_c(x) - sum_{e, x+e in D} omega(x, e) h_c(x+e) = sum_{e, x+e in class c} omega(x, e)

for ``x`` in ``D``.  Ellipticity makes ``I - Q`` a non-singular M-matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidProblem, NonConvergence, SingularSystem
from .geometry import SiteIndex, outer_boundary, unit_steps

DIRECT_LIMIT = 200_000


@dataclass
class AbsorbingProblem:
    env: object
    interior: np.ndarray
    boundary: np.ndarray
    labels: np.ndarray
    class_names: tuple
    starts: np.ndarray

    def __post_init__(self):
        d = self.env.d
        self.interior = np.asarray(self.interior, dtype=np.int64).reshape(-1, d)
        self.boundary = np.asarray(self.boundary, dtype=np.int64).reshape(-1, d)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.starts = np.asarray(self.starts, dtype=np.int64).reshape(-1, d)
        self.class_names = tuple(self.class_names)

    @classmethod
    def from_classifier(cls, env, interior, classify, class_names, starts=None):
        """Boundary = outer boundary of ``interior``; ``classify`` labels it."""
        interior = np.asarray(interior, dtype=np.int64)
        boundary = outer_boundary(interior)
        labels = np.asarray(classify(boundary), dtype=np.int64)
        if starts is None:
            starts = interior[:0]
        return cls(env, interior, boundary, labels, class_names, starts)

    def validate(self):
        n_cls = len(self.class_names)
        if len(self.interior) == 0:
            raise InvalidProblem("empty interior")
        if self.labels.shape != (len(self.boundary),):
            raise InvalidProblem("one label per boundary site required")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= n_cls):
            raise InvalidProblem("boundary label out of range")
        if len(np.unique(self.interior, axis=0)) != len(self.interior):
            raise InvalidProblem("duplicate interior sites")
        if len(self.boundary) and SiteIndex(self.interior).contains(self.boundary).any():
            raise InvalidProblem("interior and boundary intersect")


@dataclass
class ExitDistribution:
    """Per start site, probability of absorption in each boundary class."""

    class_names: tuple
    starts: np.ndarray
    probs: np.ndarray
    residual: float

    def row(self, k=0):
        return {name: float(self.probs[k, c]) for c, name in enumerate(self.class_names)}

    def prob(self, name, k=0):
        return float(self.probs[k, self.class_names.index(name)])

    def column(self, name):
        return self.probs[:, self.class_names.index(name)]


@dataclass
class DomainSolution:
    """Absorption probabilities for every interior site of a domain."""

    index: SiteIndex
    values: np.ndarray
    residual: float
    class_names: tuple = ()

    def at(self, sites):
        rows = self.index.lookup(sites)
        if (rows < 0).any():
            raise InvalidProblem("query site is not interior", site=np.asarray(sites)[rows < 0][0].tolist())
        return self.values[rows]


def assemble(problem):
    """Sparse ``A = I - Q`` and dense right-hand sides ``B`` (one column per class)."""
    env = problem.env
    interior = problem.interior
    n, d = interior.shape
    n_cls = len(problem.class_names)
    w = env.realize(interior)
    idx = SiteIndex(interior)
    bidx = SiteIndex(problem.boundary) if len(problem.boundary) else None
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
    B = np.zeros((n, n_cls))
    for k, e in enumerate(unit_steps(d)):
        nb = interior + e
        j = idx.lookup(nb)
        inner = j >= 0
        rows.append(np.nonzero(inner)[0])
        cols.append(j[inner])
        vals.append(-w[inner, k])
        out = np.nonzero(~inner)[0]
        if len(out):
            b = bidx.lookup(nb[out]) if bidx is not None else np.full(len(out), -1)
            if (b < 0).any():
                raise InvalidProblem("interior site has a neighbour outside interior and boundary",
                                     site=nb[out][b < 0][0].tolist())
            np.add.at(B, (out, problem.labels[b]), w[out, k])
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A, B, idx


def _residual(A, X, B):
    return float(np.max(np.abs(A @ X - B))) if X.size else 0.0


def _solve_direct(A, B, tolerance):
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularSystem(f"factorization failed: {exc}") from None
    X = lu.solve(B)
    res = _residual(A, X, B)
    for _ in range(3):
        if res <= tolerance:
            break
        X = X + lu.solve(B - A @ X)
        res = _residual(A, X, B)
    if not np.all(np.isfinite(X)):
        raise SingularSystem("non-finite solution")
    return X, res


def _solve_iterative(A, B, tolerance, max_iter):
    # repeated local averaging: X <- Q X + B, with Q = I - A
    Q = (sp.identity(A.shape[0], format="csr") - A).tocsr()
    X = np.zeros_like(B)
    res = np.inf
    for it in range(1, max_iter + 1):
        X = Q @ X + B
        if it % 50 == 0:
            res = _residual(A, X, B)
            if res <= tolerance:
                return X, res
    res = _residual(A, X, B)
    if res <= tolerance:
        return X, res
    raise NonConvergence(f"residual {res:.3e} after {max_iter} sweeps", iterations=max_iter, residual=res)


def solve_domain(problem, tolerance=1e-12, method="auto", max_iter=1_000_000):
    A, B, idx = assemble(problem)
    if method == "auto":
        method = "direct" if A.shape[0] <= DIRECT_LIMIT else "iterative"
    if method == "direct":
        X, res = _solve_direct(A, B, tolerance)
    elif method == "iterative":
        X, res = _solve_iterative(A, B, tolerance, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    return DomainSolution(idx, X, res, problem.class_names)


def solve_exit_distribution(problem, tolerance=1e-12, method="auto", max_iter=1_000_000):
    """Exit distribution from each start site of ``problem``.

    A start on the boundary is absorbed at time 0 in its own class.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    problem.validate()
    sol = solve_domain(problem, tolerance, method, max_iter)
    n_cls = len(problem.class_names)
    probs = np.zeros((len(problem.starts), n_cls))
    rows = sol.index.lookup(problem.starts)
    inner = rows >= 0
    probs[inner] = sol.values[rows[inner]]
    if (~inner).any():
        b = SiteIndex(problem.boundary).lookup(problem.starts[~inner]) if len(problem.boundary) else None
        if b is None or (b < 0).any():
            raise InvalidProblem("start site is neither interior nor boundary")
        probs[np.nonzero(~inner)[0], problem.labels[b]] = 1.0
    return ExitDistribution(problem.class_names, problem.starts, probs, sol.residual)


def dump_matrix_market(problem, prefix):
    """Write ``A`` and ``B`` of the assembled system as MatrixMarket coordinate files."""
    A, B, _ = assemble(problem)
    paths = (f"{prefix}_A.mtx", f"{prefix}_B.mtx")
    scipy.io.mmwrite(paths[0], A, field="real", precision=17)
    scipy.io.mmwrite(paths[1], sp.coo_matrix(B), field="real", precision=17)
    return paths
