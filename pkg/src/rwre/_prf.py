"""Counter-based pseudorandom function shared by environments and walks.

Every random number in the package is ``uniform(key(seed, words...), counter)``:
a pure function of its inputs, so values do not depend on evaluation order,
thread count or which sites were realized before.
"""
import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# domain-separation tags
TAG_SITE = np.uint64(0x51)
TAG_WALK = np.uint64(0x57)
TAG_ENV = np.uint64(0x45)


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def absorb(h, word):
    return mix64((h ^ word) + GOLDEN)


@njit(cache=True, inline="always")
def to_unit(h):
    return np.float64(h >> _S11) * _INV53


@njit(cache=True)
def site_key(seed, coords):
    h = mix64(np.uint64(seed) + GOLDEN)
    h = absorb(h, TAG_SITE)
    for k in range(coords.shape[0]):
        h = absorb(h, np.uint64(np.int64(coords[k])))
    return h


@njit(cache=True)
def stream_key(seed, tag, a, b):
    h = mix64(np.uint64(seed) + GOLDEN)
    h = absorb(h, tag)
    h = absorb(h, np.uint64(a))
    return absorb(h, np.uint64(b))


@njit(cache=True, inline="always")
def draw(key, counter):
    return to_unit(absorb(key, np.uint64(counter)))


def derive_seed(master, *words):
    """Child 64-bit seed from a master seed and integer words (pure Python)."""
    mask = (1 << 64) - 1

    def mix(z):
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return z ^ (z >> 31)

    h = mix((int(master) + 0x9E3779B97F4A7C15) & mask)
    for w in words:
        h = mix(((h ^ (int(w) & mask)) + 0x9E3779B97F4A7C15) & mask)
    return h
