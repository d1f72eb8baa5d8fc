"""I.i.d. uniformly elliptic environment laws and their seeded realizations.

The transition vector at a site is indexed in the fixed order
``(e1, -e1, e2, -e2, ..., ed, -ed)`` and is a pure function of
``(seed, site)``: it is computed by hashing the site coordinates, never by
advancing a sequential generator.
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _prf
from .errors import InsufficientSamples, InvalidLaw, OutOfSlab
from .geometry import Frame

KINDS = ("deterministic_drift", "epsilon_perturbed_srw", "simplex_uniform_floor", "two_point")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}


@dataclass(frozen=True)
class EnvironmentLaw:
    """Site marginal of an i.i.d. environment.

    ``params`` per kind:

    * ``deterministic_drift``: ``eps`` -- ``w(e1) = 1/(2d) + eps``, ``w(-e1) = 1/(2d) - eps``.
    * ``epsilon_perturbed_srw``: ``eps``, ``p_plus`` -- as above with the sign of
      ``eps`` drawn per site, positive with probability ``p_plus``.
    * ``simplex_uniform_floor``: none -- uniform point of the simplex mapped onto
      ``{w : w(e) >= kappa}``.
    * ``two_point``: ``p_plus``, ``p_minus`` (vectors), ``mix`` -- ``p_plus`` with
      probability ``mix``.
    """

    d: int
    kappa: float
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        d, kappa = self.d, self.kappa
        if not (isinstance(d, (int, np.integer)) and d >= 1):
            raise InvalidLaw("d must be an integer >= 1", d=d)
        if not (0.0 < kappa <= 1.0 / (2 * d) + 1e-15):
            raise InvalidLaw("kappa must lie in (0, 1/(2d)]", kappa=kappa, d=d)
        if self.kind not in _KIND_CODE:
            raise InvalidLaw(f"unknown law kind {self.kind!r}", kind=self.kind)
        object.__setattr__(self, "params", dict(self.params))
        p = self.params
        base = 1.0 / (2 * d)
        if self.kind in ("deterministic_drift", "epsilon_perturbed_srw"):
            eps = float(p.get("eps", 0.0))
            if base - abs(eps) < kappa - 1e-15:
                raise InvalidLaw("1/(2d) - |eps| must be at least kappa", eps=eps, kappa=kappa)
            if self.kind == "epsilon_perturbed_srw":
                pp = float(p.get("p_plus", 0.5))
                if not 0.0 <= pp <= 1.0:
                    raise InvalidLaw("p_plus must lie in [0, 1]", p_plus=pp)
        elif self.kind == "two_point":
            for name in ("p_plus", "p_minus"):
                v = np.asarray(p.get(name, ()), dtype=float)
                if v.shape != (2 * d,):
                    raise InvalidLaw(f"{name} must have 2d entries", name=name)
                if abs(v.sum() - 1.0) > 1e-12 or v.min() < kappa:
                    raise InvalidLaw(f"{name} must be a probability vector with entries >= kappa", name=name)
            mix = float(p.get("mix", 0.5))
            if not 0.0 <= mix <= 1.0:
                raise InvalidLaw("mix must lie in [0, 1]", mix=mix)

    @property
    def code(self):
        return _KIND_CODE[self.kind]

    def packed_params(self):
        p = self.params
        d = self.d
        if self.kind == "deterministic_drift":
            return np.array([float(p.get("eps", 0.0))])
        if self.kind == "epsilon_perturbed_srw":
            return np.array([float(p.get("eps", 0.0)), float(p.get("p_plus", 0.5))])
        if self.kind == "two_point":
            return np.concatenate([[float(p.get("mix", 0.5))],
                                   np.asarray(p["p_plus"], float), np.asarray(p["p_minus"], float)])
        return np.zeros(1)

    @property
    def deterministic(self):
        p = self.params
        if self.kind == "deterministic_drift":
            return True
        if self.kind == "epsilon_perturbed_srw":
            return float(p.get("eps", 0.0)) == 0.0 or float(p.get("p_plus", 0.5)) in (0.0, 1.0)
        if self.kind == "two_point":
            return (float(p.get("mix", 0.5)) in (0.0, 1.0)
                    or np.array_equal(np.asarray(p["p_plus"]), np.asarray(p["p_minus"])))
        return self.kappa * 2 * self.d >= 1.0

    def to_dict(self, seed=None):
        params = {k: (list(map(float, v)) if isinstance(v, (list, tuple, np.ndarray)) else v)
                  for k, v in self.params.items()}
        out = {"d": int(self.d), "kappa": float(self.kappa), "kind": self.kind, "params": params}
        if seed is not None:
            out["seed"] = int(seed)
        return out

    @classmethod
    def from_dict(cls, spec):
        try:
            return cls(int(spec["d"]), float(spec["kappa"]), str(spec["kind"]), dict(spec.get("params", {})))
        except KeyError as exc:
            raise InvalidLaw(f"law spec missing field {exc.args[0]!r}") from None


def law_from_json(text):
    """Parse ``{"d", "kappa", "kind", "params", "seed"}``; returns ``(law, seed)``."""
    spec = json.loads(text) if isinstance(text, str) else dict(text)
    seed = int(spec.get("seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise InvalidLaw("seed must be an unsigned 64-bit integer", seed=seed)
    return EnvironmentLaw.from_dict(spec), seed


@njit(cache=True)
def _fill_probs(kind, d, kappa, params, seed, x, out):
    key = _prf.site_key(seed, x)
    base = 1.0 / (2 * d)
    m = 2 * d
    if kind == 0 or kind == 1:
        eps = params[0]
        if kind == 1 and _prf.draw(key, 0) >= params[1]:
            eps = -eps
        for k in range(m):
            out[k] = base
        out[0] = base + eps
        out[1] = base - eps
    elif kind == 2:
        tot = 0.0
        for k in range(m):
            # 1 - U lies in (0, 1], so the log is finite
            g = -math.log(1.0 - _prf.draw(key, k))
            out[k] = g
            tot += g
        scale = 1.0 - m * kappa
        for k in range(m):
            out[k] = kappa + scale * (out[k] / tot)
    else:
        off = 1 if _prf.draw(key, 0) < params[0] else 1 + m
        for k in range(m):
            out[k] = params[off + k]


@njit(cache=True)
def realize_many(kind, d, kappa, params, seed, sites):
    n = sites.shape[0]
    out = np.empty((n, 2 * d))
    for i in range(n):
        _fill_probs(kind, d, kappa, params, seed, sites[i], out[i])
    return out


class Environment:
    """Lazily realized environment ``omega`` for a law and a 64-bit master seed."""

    def __init__(self, law, seed):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise InvalidLaw("seed must be an unsigned 64-bit integer", seed=seed)
        self.law = law
        self.seed = seed
        self.d = law.d
        self._params = law.packed_params()
        self._cache = {}
        self._lock = threading.Lock()

    def kernel_args(self):
        return (self.law.code, self.d, float(self.law.kappa), self._params, np.uint64(self.seed))

    def realize(self, sites):
        """Transition vectors for an ``(n, d)`` array of sites, shape ``(n, 2d)``."""
        sites = np.ascontiguousarray(np.asarray(sites, dtype=np.int64).reshape(-1, self.d))
        kind, d, kappa, params, seed = self.kernel_args()
        return realize_many(kind, d, kappa, params, seed, sites)

    def realize_site(self, x):
        key = tuple(int(c) for c in x)
        with self._lock:
            hit = self._cache.get(key)
        if hit is None:
            hit = self.realize(np.array([key]))[0]
            hit.setflags(write=False)
            with self._lock:
                self._cache.setdefault(key, hit)
        return hit.copy()


def realize_site(env, x):
    return env.realize_site(x)


class OverrideEnvironment:
    """An environment with hand-set transition vectors on finitely many sites."""

    def __init__(self, base, overrides):
        self.base = base
        self.d = base.d
        self.law = base.law
        self.seed = base.seed
        self.overrides = {}
        kappa = base.law.kappa
        for site, vec in overrides.items():
            v = np.asarray(vec, dtype=float)
            if v.shape != (2 * self.d,) or abs(v.sum() - 1.0) > 1e-12 or v.min() < kappa - 1e-15:
                raise InvalidLaw("override must be an elliptic probability vector", site=list(site))
            self.overrides[tuple(int(c) for c in site)] = v

    def realize(self, sites):
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        out = self.base.realize(sites)
        if self.overrides:
            for r, x in enumerate(map(tuple, sites.tolist())):
                v = self.overrides.get(x)
                if v is not None:
                    out[r] = v
        return out

    def realize_site(self, x):
        return self.realize(np.atleast_2d(x))[0]


class SlabView:
    """Read-only view of an environment restricted to ``lower <= x.l < upper``."""

    def __init__(self, parent, lower, upper, frame, track=False):
        if not lower < upper:
            raise ValueError("slab view needs lower < upper")
        self.parent = parent
        self.lower = float(lower)
        self.upper = float(upper)
        self.frame = frame if isinstance(frame, Frame) else Frame(frame)
        self.d = parent.d
        self.law = parent.law
        self.queried = set() if track else None

    def contains(self, sites):
        u = self.frame.u(np.asarray(sites, dtype=np.int64).reshape(-1, self.d))
        return (u >= self.lower) & (u < self.upper)

    def realize(self, sites):
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        ok = self.contains(sites)
        if not ok.all():
            bad = sites[~ok][0]
            raise OutOfSlab("site outside slab view", site=bad.tolist(),
                            lower=self.lower, upper=self.upper)
        if self.queried is not None:
            self.queried.update(map(tuple, sites.tolist()))
        return self.parent.realize(sites)

    def realize_site(self, x):
        return self.realize(np.atleast_2d(x))[0]


def restrict_to_slab(env, lower, upper, direction, track=False):
    return SlabView(env, lower, upper, direction if isinstance(direction, Frame) else Frame(direction), track)


@dataclass
class LawStatistics:
    mean: np.ndarray
    variance: np.ndarray
    n: int

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.n)


def law_statistics(law, n, seed):
    """Sample mean and unbiased variance of each transition entry over ``n`` sites."""
    if n < 2:
        raise InsufficientSamples("law_statistics needs n >= 2", n=n)
    env = Environment(law, seed)
    sites = np.zeros((n, law.d), dtype=np.int64)
    sites[:, 0] = np.arange(n)
    w = env.realize(sites)
    # shifting by the first sample keeps a constant column exactly zero-variance
    c = w - w[0]
    return LawStatistics(w[0] + c.mean(axis=0), c.var(axis=0, ddof=1), n)
