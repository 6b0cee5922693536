"""Counter-based random number generation (Philox 4x32-10).

Every draw in the engine is addressed, never sequenced: a draw is a pure
function of (master key, stream id, draw index).  Stream ids encode
(replication, outer index, inner index, date, coordinate, purpose), so any
piece of randomness can be revisited from anywhere -- this is what makes
common-random-number pairing and thread-count-independent reproducibility
trivial.
"""

import numpy as np
from numba import njit

# stream id field widths (bits): inner 16 | date 7 | coord 4 | purpose 3
_MASK32 = np.uint64(0xFFFFFFFF)

# purposes
P_PREFIX = 0   # skeleton prefix events of a derivative replication
P_CONT = 1     # shared continuation events (one stream per coordinate)
P_EXCL = 2     # resampled excursion of the differentiated coordinate
P_PHYS = 3     # physical backtest path
P_PRICE = 4    # plain price paths
P_MISC = 5     # standalone sampling (tests, debug dumps)

REP_MAX = 1 << 16
OUTER_MAX = 1 << 16
INNER_MAX = 1 << 16
DATE_MAX = (1 << 7) - 1   # 127 reserved for "no date" contexts
COORD_MAX = 1 << 4

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def derive_key(seed):
    """Master 64-bit Philox key from an integer seed (splitmix64 round)."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z = z ^ (z >> 31)
    return np.uint64(z & 0xFFFFFFFF), np.uint64(z >> 32)


def make_sid(rep=0, outer=0, inner=0, date=DATE_MAX, coord=0, purpose=P_MISC):
    """Pack stream id fields into the two Philox counter words (c1, c2)."""
    if not (0 <= rep < REP_MAX and 0 <= outer < OUTER_MAX and 0 <= inner < INNER_MAX):
        raise ValueError("stream id field out of range (rep/outer/inner)")
    if not (0 <= date <= DATE_MAX and 0 <= coord < COORD_MAX and 0 <= purpose < 8):
        raise ValueError("stream id field out of range (date/coord/purpose)")
    c1 = inner | (date << 16) | (coord << 23) | (purpose << 27)
    c2 = rep | (outer << 16)
    return np.uint64(c1), np.uint64(c2)


@njit(cache=True, inline="always")
def _mulhilo(a, b):
    prod = a * b
    return prod >> np.uint64(32), prod & _MASK32


@njit(cache=True)
def philox4(k0, k1, c0, c1, c2, c3):
    """One Philox 4x32-10 block; returns four 32-bit words as uint64."""
    x0, x1, x2, x3 = c0, c1, c2, c3
    key0, key1 = k0, k1
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, x0)
        hi1, lo1 = _mulhilo(_M1, x2)
        y0 = hi1 ^ x1 ^ key0
        y1 = lo1
        y2 = hi0 ^ x3 ^ key1
        y3 = lo0
        x0, x1, x2, x3 = y0, y1, y2, y3
        key0 = (key0 + _W0) & _MASK32
        key1 = (key1 + _W1) & _MASK32
    return x0, x1, x2, x3


@njit(cache=True, inline="always")
def _to_unit(hi, lo):
    return float((hi << np.uint64(21)) | (lo >> np.uint64(11))) * _INV53


@njit(cache=True)
def uniform_pair(k0, k1, sid1, sid2, n):
    """Two independent U(0,1) draws addressed by stream id and index n."""
    y0, y1, y2, y3 = philox4(k0, k1, np.uint64(n), sid1, sid2, np.uint64(0))
    return _to_unit(y0, y1), _to_unit(y2, y3)


class PhiloxStream:
    """Sequential view over the addressed generator (public sampling API).

    Carries a master seed, a packed stream id and a running draw counter.
    Equal (seed, id) prefixes always reproduce the same draws.
    """

    def __init__(self, seed, rep=0, outer=0, inner=0, date=DATE_MAX, coord=0,
                 purpose=P_MISC):
        self.seed = int(seed)
        self._k0, self._k1 = derive_key(seed)
        self._sid1, self._sid2 = make_sid(rep, outer, inner, date, coord, purpose)
        self.counter = 0

    def uniform_pair(self):
        u, v = uniform_pair(self._k0, self._k1, self._sid1, self._sid2,
                            self.counter)
        self.counter += 1
        return u, v

    def uniforms(self, n):
        out = np.empty(2 * n)
        for i in range(n):
            out[2 * i], out[2 * i + 1] = self.uniform_pair()
        return out
