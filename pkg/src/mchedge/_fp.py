"""Law of the first exit time of standard Brownian motion from [-1, 1].

tau = inf{t : |W_t| = 1}.  Level-k crossing durations are 4**-k * tau.
The distribution function is evaluated through two complementary series
(reflection form for small t, spectral form for large t); sampling inverts
the distribution via a dense precomputed table with analytic tail branches,
so a draw costs O(1).

E tau = 1 and Var tau = 2/3 (optional stopping on W^2 - t and W^4 - 6tW^2 + 3t^2).
"""

import math

import numpy as np
from numba import njit

_T_SPLIT = 0.35  # series switch point; both expansions are accurate here

# ---------------------------------------------------------------------------
# distribution function / density
# ---------------------------------------------------------------------------


@njit(cache=True)
def cdf(t):
    """P(tau <= t)."""
    if t <= 0.0:
        return 0.0
    if t < _T_SPLIT:
        # reflection series: 4 * sum_m (-1)^m  Phibar((2m+1)/sqrt(t))
        rt = math.sqrt(t)
        s = 0.0
        sign = 1.0
        for m in range(8):
            z = (2 * m + 1) / rt
            term = 0.5 * math.erfc(z / math.sqrt(2.0))
            s += sign * term
            if term < 1e-20:
                break
            sign = -sign
        return 4.0 * s
    # spectral series: 1 - sum_n (-1)^n (4/((2n+1)pi)) exp(-(2n+1)^2 pi^2 t/8)
    s = 0.0
    sign = 1.0
    for n in range(16):
        a = 2 * n + 1
        term = 4.0 / (a * math.pi) * math.exp(-a * a * math.pi ** 2 * t / 8.0)
        s += sign * term
        if term < 1e-20:
            break
        sign = -sign
    return 1.0 - s


@njit(cache=True)
def pdf(t):
    """Density of tau."""
    if t <= 0.0:
        return 0.0
    if t < _T_SPLIT:
        rt = math.sqrt(t)
        c = 1.0 / math.sqrt(2.0 * math.pi)
        s = 0.0
        sign = 1.0
        for m in range(8):
            a = 2 * m + 1
            z = a / rt
            term = a * c * math.exp(-0.5 * z * z)
            s += sign * term
            if term < 1e-20:
                break
            sign = -sign
        return 2.0 * s / (t * rt)
    s = 0.0
    sign = 1.0
    for n in range(16):
        a = 2 * n + 1
        term = a * math.exp(-a * a * math.pi ** 2 * t / 8.0)
        s += sign * term
        if term < 1e-20:
            break
        sign = -sign
    return 0.5 * math.pi * s


@njit(cache=True)
def _inv_norm_upper(p):
    """x with Phibar(x) = p, for small p (Acklam rational + one Newton)."""
    q = math.sqrt(-2.0 * math.log(p))
    x = q - (2.515517 + 0.802853 * q + 0.010328 * q * q) / (
        1.0 + 1.432788 * q + 0.189269 * q * q + 0.001308 * q * q * q)
    for _ in range(2):
        f = 0.5 * math.erfc(x / math.sqrt(2.0)) - p
        d = -math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        x -= f / d
    return x


@njit(cache=True)
def inv_cdf_exact(u, t0):
    """Newton refinement of cdf(t) = u starting from t0."""
    t = t0
    for _ in range(40):
        f = cdf(t) - u
        d = pdf(t)
        if d <= 0.0:
            break
        step = f / d
        t_new = t - step
        if t_new <= 0.0:
            t_new = 0.5 * t
        t = t_new
        if abs(step) < 1e-14 * (1.0 + t):
            break
    return t


# ---------------------------------------------------------------------------
# inverse-distribution table
# ---------------------------------------------------------------------------

_TABLE_N = 1 << 16
_U_LO = 2.0 ** -14
_U_HI = 1.0 - 2.0 ** -14
_table = None


def _build_table():
    us = np.linspace(_U_LO, _U_HI, _TABLE_N + 1)
    ts = np.empty_like(us)
    # coarse monotone sweep gives each point a good Newton start
    t = 0.05
    for i, u in enumerate(us):
        t = inv_cdf_exact(u, t)
        ts[i] = t
    return ts


def table():
    """Inverse-cdf table on the uniform u-grid (built once per process)."""
    global _table
    if _table is None:
        _table = _build_table()
    return _table


_DU = (_U_HI - _U_LO) / _TABLE_N
_LN4_PI = math.log(4.0 / math.pi)
_PI2_8 = math.pi ** 2 / 8.0


@njit(cache=True)
def inv_cdf(u, tab):
    """Quantile function of tau; table interpolation with exact tails."""
    if u <= _U_LO:
        # lower tail: cdf(t) ~= 4 Phibar(1/sqrt(t))
        x = _inv_norm_upper(0.25 * u)
        t = 1.0 / (x * x)
        return inv_cdf_exact(u, t)
    if u >= _U_HI:
        # upper tail: 1 - cdf(t) ~= (4/pi) exp(-pi^2 t / 8)
        s = 1.0 - u
        if s <= 0.0:
            s = 1e-17
        t = (_LN4_PI - math.log(s)) / _PI2_8
        return inv_cdf_exact(u, t)
    x = (u - _U_LO) / _DU
    i = int(x)
    if i >= _TABLE_N:
        i = _TABLE_N - 1
    w = x - i
    return tab[i] * (1.0 - w) + tab[i + 1] * w


@njit(cache=True, inline="always")
def draw_duration_sign(k0, k1, sid1, sid2, n, tab, scale):
    """One level crossing: (duration, sign) addressed by stream id and index.

    duration = scale * tau with scale = 4**-k; sign is +-1 with probability 1/2,
    independent of the duration (two halves of one counter block).
    """
    y0, y1, y2, y3 = _philox4(k0, k1, np.uint64(n), sid1, sid2, np.uint64(0))
    u = float((y0 << np.uint64(21)) | (y1 >> np.uint64(11))) * _INV53
    v = float((y2 << np.uint64(21)) | (y3 >> np.uint64(11))) * _INV53
    dur = inv_cdf(u, tab) * scale
    sign = 1.0 if v < 0.5 else -1.0
    return dur, sign


# late import keeps numba happy about cross-module inlining
from ._rng import philox4 as _philox4, _INV53  # noqa: E402
