"""Walk simulation and annealed estimation over environment replicas.

Randomness is counter based: environment replica ``r`` uses the seed
``derive_seed(master, ENV_WORD, r)`` and walk ``w`` of that replica draws its
``n``-th step from ``draw(stream_key(master, TAG_WALK, r, w), n)``.  Estimates
are therefore bit-identical for a fixed master seed whatever the chunking or
number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _prf
from .environment import Environment, SlabView, _fill_probs
from .errors import InsufficientSamples, StepBudgetExceeded
from .geometry import BoundaryClass, BoxTriple, Frame
from .quenched import Bracket, SlabGeometry, box_failure_probability, slab_exit_bracket, tilde_q_level
from .solver import AbsorbingProblem, solve_exit_distribution
from .stats import EstimateCI, binomial_ci, normal_ci

ENV_WORD = 0x454E56
DEFAULT_BUDGET = 10 ** 9
EXACT = "exact"


@dataclass(frozen=True)
class StopSpec:
    """Exit from ``{lower < x.l < upper, |x . R e_j| < lateral}``.

    Exit classes follow the box convention: POSITIVE when ``x.l >= upper`` with
    the lateral bound satisfied, NEGATIVE when ``x.l <= lower`` likewise, LATERAL
    otherwise.  ``lateral = inf`` gives a slab.
    """

    frame: Frame
    lower: float
    upper: float
    lateral: float = math.inf

    @classmethod
    def slab(cls, direction, L):
        f = direction if isinstance(direction, Frame) else Frame(direction)
        return cls(f, -float(L), float(L))

    @classmethod
    def box(cls, box):
        return cls(box.frame, -box.L, box.L, box.Lt)

    @property
    def finite(self):
        return math.isfinite(self.lateral) or self.frame.d == 1


@dataclass(frozen=True)
class LevelCounter:
    """Levels ``i_min..i_max`` at spacing ``L0`` whose excursion counts are recorded."""

    L0: float
    i_min: int
    i_max: int


@dataclass
class WalkOutcome:
    exit_site: tuple
    exit_class: BoundaryClass
    steps: int
    excursions: dict
    stream: tuple


@njit(cache=True, inline="always")
def _dot(x, e_k, sign, ell):
    s = 0.0
    for j in range(x.shape[0]):
        v = x[j]
        if j == e_k:
            v += sign
        s += v * ell[j]
    return s


@njit(cache=True)
def _straddles(x, ell, s):
    u = _dot(x, -1, 0, ell) - s
    for k in range(x.shape[0]):
        for sg in (1, -1):
            if u * (_dot(x, k, sg, ell) - s) <= 0.0:
                return True
    return False


@njit(cache=True)
def _frontal(x, ell, s, buf):
    if _straddles(x, ell, s) or _dot(x, -1, 0, ell) - s < 0.0:
        return False
    for k in range(x.shape[0]):
        for sg in (1, -1):
            for j in range(x.shape[0]):
                buf[j] = x[j]
            buf[k] += sg
            if _straddles(buf, ell, s):
                return True
    return False


@njit(cache=True, nogil=True)
def _walk_kernel(kind, d, kappa, params, env_seed, master, replica, walk_ids, start, ell, Rlat,
                 lower, upper, lat_half, budget, L0, i_min, i_max,
                 out_exit, out_class, out_steps, out_exc):
    probs = np.empty(2 * d)
    x = np.empty(d, dtype=np.int64)
    prev = np.empty(d, dtype=np.int64)
    buf = np.empty(d, dtype=np.int64)
    n_lev = i_max - i_min + 1 if L0 > 0 else 0
    for w in range(walk_ids.shape[0]):
        key = _prf.stream_key(master, _prf.TAG_WALK, replica, walk_ids[w])
        for j in range(d):
            x[j] = start[j]
        step = 0
        cls = -1
        while True:
            u = 0.0
            for j in range(d):
                u += x[j] * ell[j]
            lat_ok = True
            for c in range(Rlat.shape[1]):
                lv = 0.0
                for j in range(d):
                    lv += x[j] * Rlat[j, c]
                if abs(lv) >= lat_half:
                    lat_ok = False
            if lat_ok and lower < u < upper:
                pass
            else:
                if lat_ok and u >= upper:
                    cls = 0
                elif lat_ok and u <= lower:
                    cls = 1
                else:
                    cls = 2
                break
            if step >= budget:
                cls = -1
                break
            _fill_probs(kind, d, kappa, params, env_seed, x, probs)
            r = _prf.draw(key, step)
            acc = 0.0
            k = 2 * d - 1
            for m in range(2 * d):
                acc += probs[m]
                if r < acc:
                    k = m
                    break
            for j in range(d):
                prev[j] = x[j]
            if k % 2 == 0:
                x[k // 2] += 1
            else:
                x[k // 2] -= 1
            step += 1
            for li in range(n_lev):
                s = (i_min + li) * L0
                if _frontal(x, ell, s, buf) and _straddles(prev, ell, s):
                    out_exc[w, li] += 1
        for j in range(d):
            out_exit[w, j] = x[j]
        out_class[w] = cls
        out_steps[w] = step


@dataclass
class WalkBatch:
    exit_sites: np.ndarray
    exit_class: np.ndarray
    steps: np.ndarray
    excursions: np.ndarray
    walk_ids: np.ndarray


def simulate_walks(env, start, stop, master_seed, replica=0, n=1, first=0, levels=None,
                   budget=DEFAULT_BUDGET, threads=1, chunk=4096):
    """Run walks ``first..first+n-1`` of ``replica`` from ``start`` until ``stop``."""
    if not isinstance(env, Environment):
        raise TypeError("walk simulation needs a law-backed Environment")
    d = env.d
    start = np.asarray(start if start is not None else np.zeros(d), dtype=np.int64).reshape(d)
    f = stop.frame
    ell = np.ascontiguousarray(f.ell)
    Rlat = np.ascontiguousarray(f.R[:, 1:])
    lat = float(stop.lateral) if math.isfinite(stop.lateral) else np.inf
    L0, i_min, i_max = (float(levels.L0), int(levels.i_min), int(levels.i_max)) if levels else (0.0, 0, -1)
    n_lev = max(i_max - i_min + 1, 0)
    ids = np.arange(first, first + n, dtype=np.int64)
    out_exit = np.zeros((n, d), dtype=np.int64)
    out_class = np.zeros(n, dtype=np.int64)
    out_steps = np.zeros(n, dtype=np.int64)
    out_exc = np.zeros((n, n_lev), dtype=np.int64)
    kind, _, kappa, params, env_seed = env.kernel_args()

    def run(a, b):
        _walk_kernel(kind, d, kappa, params, env_seed, np.uint64(master_seed), np.uint64(replica), ids[a:b],
                     start, ell, Rlat, float(stop.lower), float(stop.upper), lat, np.int64(budget),
                     L0, i_min, i_max, out_exit[a:b], out_class[a:b], out_steps[a:b], out_exc[a:b])

    bounds = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda ab: run(*ab), bounds))
    else:
        for a, b in bounds:
            run(a, b)
    if (out_class < 0).any():
        raise StepBudgetExceeded(f"walk exceeded {budget} steps", budget=budget)
    return WalkBatch(out_exit, out_class, out_steps, out_exc, ids)


def simulate_walk(env, start, stop, master_seed, stream=(0, 0), levels=None, budget=DEFAULT_BUDGET):
    """One walk; ``stream = (replica, walk index)``."""
    replica, idx = stream
    b = simulate_walks(env, start, stop, master_seed, replica, 1, idx, levels, budget)
    exc = {}
    if levels is not None:
        exc = {i: int(b.excursions[0, k]) for k, i in enumerate(range(levels.i_min, levels.i_max + 1))}
    return WalkOutcome(tuple(b.exit_sites[0].tolist()), BoundaryClass(int(b.exit_class[0])),
                       int(b.steps[0]), exc, (int(master_seed), int(replica), int(idx)))


# --------------------------------------------------------------------------
# annealed estimation


@dataclass(frozen=True)
class EventSpec:
    """``P_start[exit of stop lands in target]``."""

    stop: StopSpec
    target: BoundaryClass = BoundaryClass.NEGATIVE
    start: tuple | None = None


def replica_environment(law, master_seed, r):
    return Environment(law, _prf.derive_seed(master_seed, ENV_WORD, r))


def exact_event_bracket(env, event, tol=1e-9, rtol=1e-6):
    """Exact quenched probability of the event (a bracket for slab events)."""
    stop = event.stop
    d = env.d
    start = np.zeros(d, np.int64) if event.start is None else np.asarray(event.start, np.int64)
    if math.isfinite(stop.lateral):
        f = stop.frame
        cand = f.window(stop.lower, stop.upper, stop.lateral)
        u = f.u(cand)
        interior = cand[(u > stop.lower) & (u < stop.upper) & f.lateral_inside(cand, stop.lateral)]

        def classify(b):
            ub = f.u(b)
            ok = f.lateral_inside(b, stop.lateral)
            lab = np.full(len(b), int(BoundaryClass.LATERAL))
            lab[(ub >= stop.upper) & ok] = int(BoundaryClass.POSITIVE)
            lab[(ub <= stop.lower) & ok] = int(BoundaryClass.NEGATIVE)
            return lab

        prob = AbsorbingProblem.from_classifier(env, interior, classify,
                                                tuple(c.name.lower() for c in BoundaryClass), start[None, :])
        v = float(solve_exit_distribution(prob).probs[0, int(event.target)])
        return Bracket.point(v)
    br = slab_exit_bracket(env, stop.frame, stop.lower, stop.upper, start, tol=tol, rtol=rtol)
    if event.target == BoundaryClass.NEGATIVE:
        return br
    if event.target == BoundaryClass.POSITIVE:
        return Bracket(1.0 - br.upper, 1.0 - br.lower)
    return Bracket.point(0.0)


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def estimate_probability(law, event, n_env, walks_per_env=EXACT, confidence=0.95, master_seed=0,
                         method="wilson", threads=1, budget=DEFAULT_BUDGET):
    """Annealed probability of ``event`` averaged over ``n_env`` environment replicas.

    ``walks_per_env == EXACT`` averages exact quenched values (normal CI on the
    per-environment values); otherwise each replica runs that many walks and
    the pooled success count gets a binomial CI (``method``).
    """
    if n_env < 1:
        raise InsufficientSamples("n_env must be at least 1", n_env=n_env)
    if walks_per_env == EXACT:
        def one(r):
            return exact_event_bracket(replica_environment(law, master_seed, r), event)

        brs = _map(one, range(n_env), threads)
        point, lo, hi = normal_ci([b.lower for b in brs], [b.upper for b in brs], confidence, law.deterministic)
        return EstimateCI(point, lo, hi, confidence, n_env, "normal", "exact", n_env, 0)
    n_walk = int(walks_per_env)
    if n_walk < 1:
        raise InsufficientSamples("walks_per_env must be at least 1", walks_per_env=n_walk)

    def count(r):
        env = replica_environment(law, master_seed, r)
        b = simulate_walks(env, event.start, event.stop, master_seed, r, n_walk, budget=budget)
        return int(np.count_nonzero(b.exit_class == int(event.target)))

    k = sum(_map(count, range(n_env), threads))
    n = n_env * n_walk
    lo, hi = binomial_ci(k, n, confidence, method)
    return EstimateCI(k / n, lo, hi, confidence, n, method, "mc", n_env, n_walk, k)


# --------------------------------------------------------------------------
# independence of the per-level backward-crossing variables


@dataclass
class IndependenceResult:
    levels: list
    values: np.ndarray      # (n_env, n_levels) sup of bracket midpoints
    corr: np.ndarray
    flags: np.ndarray
    threshold: float
    disjoint_reads: bool

    @property
    def n_flagged_pairs(self):
        k = len(self.levels)
        return int(sum(self.flags[a, b] for a in range(k) for b in range(a + 1, k)))

    @property
    def n_pairs(self):
        k = len(self.levels)
        return k * (k - 1) // 2


def correlation_flags(values, n_env=None):
    values = np.asarray(values, dtype=float)
    n = values.shape[0] if n_env is None else n_env
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(values, rowvar=False)
    thr = 4.0 / math.sqrt(n)
    flags = np.abs(np.nan_to_num(corr, nan=0.0)) > thr
    np.fill_diagonal(flags, False)
    return corr, flags, thr


def level_view(env, geom, i, track=True):
    """Slab view holding exactly the sites a level-``i`` backward-crossing solve reads."""
    m = geom.frame.max_step
    return SlabView(env, geom.level(i - 1) + m + 1e-9, geom.level(i) + m + 1e-9, geom.frame, track)


def independence_diagnostic(law, geom, levels, n_env, master_seed, threads=1):
    if n_env < 30:
        raise InsufficientSamples("independence diagnostic needs n_env >= 30", n_env=n_env)
    levels = list(levels)

    def one(r):
        env = replica_environment(law, master_seed, r)
        row, reads = [], []
        for i in levels:
            view = level_view(env, geom, i)
            row.append(tilde_q_level(view, geom, i).sup_mid)
            reads.append(view.queried)
        disjoint = all(not (reads[a] & reads[b]) for a in range(len(reads)) for b in range(a + 1, len(reads)))
        return row, disjoint

    out = _map(one, range(n_env), threads)
    values = np.array([r for r, _ in out])
    corr, flags, thr = correlation_flags(values)
    return IndependenceResult(levels, values, corr, flags, thr, all(dj for _, dj in out))
