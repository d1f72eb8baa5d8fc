"""Lattice geometry: directions, rotations, rotated boxes and hyperplane families.

Sites are integer arrays of shape ``(n, d)``.  A :class:`Frame` carries a unit
direction ``ell`` together with a rotation ``R`` whose first column is ``ell``;
``frame.project(x)`` returns the longitudinal coordinate ``x . ell`` and the
lateral coordinates ``x . R e_j`` for ``j = 2..d``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBox, NonUnitDirection

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Direction:
    """Unit vector in R^d."""

    components: tuple

    def __post_init__(self):
        v = np.asarray(self.components, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise NonUnitDirection("direction must be a non-empty vector", components=list(self.components))
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > UNIT_TOL:
            raise NonUnitDirection(f"|l|_2 = {norm!r} deviates from 1 by more than {UNIT_TOL}",
                                   norm=norm)
        if norm != 1.0:
            v = v / norm
        object.__setattr__(self, "components", tuple(float(c) for c in v))

    @classmethod
    def axis(cls, d, k=0):
        v = [0.0] * d
        v[k] = 1.0
        return cls(tuple(v))

    @classmethod
    def from_angle(cls, theta):
        return cls((math.cos(theta), math.sin(theta)))

    @property
    def d(self):
        return len(self.components)

    @property
    def vector(self):
        return np.array(self.components, dtype=float)


def build_rotation(direction):
    """Orthogonal matrix with first column ``direction``.

    The remaining columns come from Gram-Schmidt against e_1, ..., e_d in that
    order, skipping vectors whose residual norm falls below 1e-6.  If the result
    has determinant -1 the last column is negated, so the output is a proper
    rotation whenever d >= 2.
    """
    if not isinstance(direction, Direction):
        direction = Direction(tuple(direction))
    ell = direction.vector
    d = ell.size
    cols = [ell]
    for k in range(d):
        if len(cols) == d:
            break
        v = np.zeros(d)
        v[k] = 1.0
        for c in cols:
            v = v - (v @ c) * c
        # second pass keeps the columns orthogonal to ~1e-16
        for c in cols:
            v = v - (v @ c) * c
        n = np.linalg.norm(v)
        if n < 1e-6:
            continue
        cols.append(v / n)
    R = np.column_stack(cols)
    if d >= 2 and np.linalg.det(R) < 0:
        R[:, -1] = -R[:, -1]
    return R


class Frame:
    """Direction plus rotation; immutable after construction."""

    def __init__(self, direction, rotation=None):
        if not isinstance(direction, Direction):
            direction = Direction(tuple(direction))
        self.direction = direction
        R = build_rotation(direction) if rotation is None else np.array(rotation, dtype=float)
        if R.shape != (direction.d, direction.d):
            raise ValueError("rotation shape does not match direction")
        if not np.allclose(R.T @ R, np.eye(direction.d), atol=1e-10):
            raise ValueError("rotation is not orthogonal")
        if not np.allclose(R[:, 0], direction.vector, atol=1e-10):
            raise ValueError("first column of rotation must equal the direction")
        R.setflags(write=False)
        self.R = R
        self.ell = direction.vector
        self.ell.setflags(write=False)
        # largest projection of a unit lattice step onto ell
        self.max_step = float(np.max(np.abs(self.ell)))

    @property
    def d(self):
        return self.direction.d

    def u(self, sites):
        return np.asarray(sites, dtype=float) @ self.ell

    def lateral(self, sites):
        """Lateral coordinates, shape ``(n, d-1)``."""
        return np.asarray(sites, dtype=float) @ self.R[:, 1:]

    def project(self, sites):
        c = np.asarray(sites, dtype=float) @ self.R
        return c[:, 0], c[:, 1:]

    def lateral_inside(self, sites, half_width, center=None):
        """``|x . R e_j - center_j| < half_width`` for all j >= 2."""
        lat = self.lateral(sites)
        if center is not None:
            lat = lat - np.asarray(center, dtype=float)
        if lat.shape[1] == 0 or not np.isfinite(half_width):
            return np.ones(lat.shape[0], dtype=bool)
        return np.all(np.abs(lat) < half_width, axis=1)

    def window(self, u_lo, u_hi, lat_half, lat_center=None, pad=1):
        """All lattice sites whose rotated coordinates lie in the closed region
        ``u in [u_lo, u_hi]``, ``|lat - lat_center| <= lat_half``, padded by ``pad``
        lattice steps in every coordinate direction (a superset; callers filter)."""
        d = self.d
        c = np.zeros(d - 1) if lat_center is None else np.asarray(lat_center, dtype=float)
        lo_c = np.concatenate([[u_lo], c - lat_half])
        hi_c = np.concatenate([[u_hi], c + lat_half])
        corners = np.array(list(itertools.product(*zip(lo_c, hi_c))))
        pts = corners @ self.R.T
        lo = np.floor(pts.min(axis=0)).astype(np.int64) - pad
        hi = np.ceil(pts.max(axis=0)).astype(np.int64) + pad
        return grid_sites(lo, hi)


def grid_sites(lo, hi):
    """Integer sites of the closed lattice box ``[lo, hi]``, row-major order."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def unit_steps(d):
    """The 2d unit vectors in the fixed order (e1, -e1, ..., ed, -ed)."""
    E = np.zeros((2 * d, d), dtype=np.int64)
    for k in range(d):
        E[2 * k, k] = 1
        E[2 * k + 1, k] = -1
    return E


class SiteIndex:
    """Row lookup for a set of sites via sorted integer keys."""

    def __init__(self, sites, lo=None, hi=None, pad=2):
        sites = np.asarray(sites, dtype=np.int64)
        self.sites = sites
        d = sites.shape[1]
        if lo is None:
            lo = sites.min(axis=0) - pad if len(sites) else np.zeros(d, dtype=np.int64)
        if hi is None:
            hi = sites.max(axis=0) + pad if len(sites) else np.zeros(d, dtype=np.int64)
        self.lo = np.asarray(lo, dtype=np.int64)
        self.shape = tuple(int(s) for s in np.asarray(hi, dtype=np.int64) - self.lo + 1)
        if float(np.prod([float(s) for s in self.shape])) >= 2.0 ** 62:
            raise ValueError("site window too large for integer keys")
        keys = self.keys(sites)
        self._order = np.argsort(keys, kind="stable")
        self._sorted = keys[self._order]

    def keys(self, sites):
        rel = np.asarray(sites, dtype=np.int64) - self.lo
        out = np.zeros(len(rel), dtype=np.int64)
        inside = np.all((rel >= 0) & (rel < np.array(self.shape)), axis=1)
        out[~inside] = -1
        if inside.any():
            out[inside] = np.ravel_multi_index(tuple(rel[inside].T), self.shape)
        return out

    def lookup(self, sites):
        """Row index of each site, -1 when absent."""
        k = self.keys(sites)
        pos = np.searchsorted(self._sorted, k)
        pos = np.minimum(pos, len(self._sorted) - 1)
        found = (len(self._sorted) > 0) & (k >= 0)
        if len(self._sorted):
            found &= self._sorted[pos] == k
        idx = np.full(len(k), -1, dtype=np.int64)
        idx[found] = self._order[pos[found]]
        return idx

    def contains(self, sites):
        return self.lookup(sites) >= 0


def outer_boundary(interior):
    """Sites outside ``interior`` at l1-distance 1 from it (the set boundary)."""
    interior = np.asarray(interior, dtype=np.int64)
    d = interior.shape[1]
    nbrs = (interior[:, None, :] + unit_steps(d)[None, :, :]).reshape(-1, d)
    index = SiteIndex(interior)
    cand = nbrs[~index.contains(nbrs)]
    if len(cand) == 0:
        return cand
    return np.unique(cand, axis=0)


# --------------------------------------------------------------------------
# boxes


class BoundaryClass(enum.IntEnum):
    POSITIVE = 0
    NEGATIVE = 1
    LATERAL = 2


@dataclass(frozen=True)
class BoxTriple:
    """Rotated box ``R((-L, L) x (-Lt, Lt)^(d-1)) intersected with Z^d``."""

    frame: Frame
    L: float
    Lt: float

    def __post_init__(self):
        if not (self.L > 0 and self.Lt > 0):
            raise ValueError("box half-length and half-width must be positive")

    @classmethod
    def from_direction(cls, direction, L, Lt):
        return cls(Frame(direction), float(L), float(Lt))

    def inside(self, sites):
        u, lat = self.frame.project(sites)
        ok = (u > -self.L) & (u < self.L)
        if lat.shape[1]:
            ok &= np.all(np.abs(lat) < self.Lt, axis=1)
        return ok

    def classify(self, sites):
        """BoundaryClass labels for sites outside the open box."""
        u, lat = self.frame.project(sites)
        lat_ok = np.all(np.abs(lat) < self.Lt, axis=1) if lat.shape[1] else np.ones(len(u), bool)
        labels = np.full(len(u), int(BoundaryClass.LATERAL), dtype=np.int64)
        labels[(u >= self.L) & lat_ok] = int(BoundaryClass.POSITIVE)
        labels[(u <= -self.L) & lat_ok] = int(BoundaryClass.NEGATIVE)
        return labels


@dataclass
class BoxSites:
    interior: np.ndarray
    boundary: np.ndarray
    labels: np.ndarray

    def of_class(self, cls):
        return self.boundary[self.labels == int(cls)]


def box_sites_and_boundary(box):
    """Interior sites of the open box and its labelled outer boundary."""
    f = box.frame
    cand = f.window(-box.L, box.L, box.Lt)
    interior = cand[box.inside(cand)]
    if len(interior) == 0:
        raise EmptyBox("no lattice site lies in the open box", L=box.L, Lt=box.Lt)
    boundary = outer_boundary(interior)
    return BoxSites(interior, boundary, box.classify(boundary))


# --------------------------------------------------------------------------
# levels and hyperplane families


def level_index(x, direction, L0):
    """The ``i`` with ``x . direction`` in ``[i L0 - L0/2, i L0 + L0/2)``."""
    ell = direction.vector if isinstance(direction, Direction) else np.asarray(direction, float)
    u = np.asarray(x, dtype=float) @ ell
    return np.floor((u + L0 / 2.0) / L0).astype(np.int64) if np.ndim(u) else int(math.floor((u + L0 / 2.0) / L0))


class Variant(enum.Enum):
    FULL = "full"
    TRUNCATED = "truncated"
    SHIFTED_BETA = "shifted_beta"
    SHIFTED_3 = "shifted_3"


@dataclass(frozen=True)
class HyperplaneFamily:
    """Thick lattice hyperplanes straddling the levels ``s_i`` along ``frame.ell``.

    ``FULL``: ``s_i = i L0``, no lateral restriction.  ``TRUNCATED``: same levels
    with ``|x . R e_j| < lateral``.  ``SHIFTED_BETA``: ``s_i = i (L0 + 1 + L0**beta)``,
    truncated.  ``SHIFTED_3``: ``s_i = i L0 + 3``, truncated.
    """

    frame: Frame
    L0: float
    variant: Variant = Variant.FULL
    lateral: float = math.inf
    beta: float | None = None

    def __post_init__(self):
        if not self.L0 > 0:
            raise ValueError("spacing must be positive")
        if self.variant is not Variant.FULL and not (self.lateral > 0 and math.isfinite(self.lateral)):
            raise ValueError("truncated variants need a finite positive lateral bound")
        if self.variant is Variant.SHIFTED_BETA and self.beta is None:
            raise ValueError("SHIFTED_BETA needs beta")

    def level(self, i):
        if self.variant is Variant.SHIFTED_BETA:
            return i * (self.L0 + 1.0 + self.L0 ** self.beta)
        if self.variant is Variant.SHIFTED_3:
            return i * self.L0 + 3.0
        return i * self.L0

    @property
    def truncated(self):
        return self.variant is not Variant.FULL

    def contains(self, sites, i):
        sites = np.asarray(sites, dtype=np.int64)
        ok = straddles(self.frame, sites, self.level(i))
        if self.truncated:
            ok &= self.frame.lateral_inside(sites, self.lateral)
        return ok

    def frontal_boundary(self, sites, i):
        """Membership in the frontal boundary: outside the (untruncated) set,
        adjacent to it, and on the non-negative side of the level.  For truncated
        variants the lateral bound is applied on top."""
        sites = np.asarray(sites, dtype=np.int64)
        s = self.level(i)
        ok = frontal_boundary(self.frame, sites, s)
        if self.truncated:
            ok &= self.frame.lateral_inside(sites, self.lateral)
        return ok

    def sites(self, i, lat_half=None):
        """Enumerate members of level ``i`` (lateral window needed for FULL)."""
        half = self.lateral if self.truncated else lat_half
        if half is None or not math.isfinite(half):
            raise ValueError("FULL family needs a finite lateral window to enumerate")
        s = self.level(i)
        m = self.frame.max_step
        cand = self.frame.window(s - m, s + m, half)
        ok = self.contains(cand, i)
        if not self.truncated:
            ok &= self.frame.lateral_inside(cand, half)
        return cand[ok]


def straddles(frame, sites, s):
    """Sites ``x`` having a neighbour ``x'`` with ``(x.l - s)(x'.l - s) <= 0``."""
    sites = np.asarray(sites, dtype=np.int64)
    u = sites @ frame.ell - s
    ok = np.zeros(len(sites), dtype=bool)
    for e in unit_steps(frame.d):
        un = (sites + e) @ frame.ell - s
        ok |= u * un <= 0
    return ok


def frontal_boundary(frame, sites, s):
    sites = np.asarray(sites, dtype=np.int64)
    ok = ~straddles(frame, sites, s) & (sites @ frame.ell - s >= 0)
    adj = np.zeros(len(sites), dtype=bool)
    for e in unit_steps(frame.d):
        adj |= straddles(frame, sites + e, s)
    return ok & adj


def hyperplane_membership(x, family, i):
    """Scalar convenience wrapper around :meth:`HyperplaneFamily.contains`."""
    return bool(family.contains(np.atleast_2d(np.asarray(x, dtype=np.int64)), i)[0])
