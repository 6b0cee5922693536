"""Compiled engines: grid evolution, market stepping, nested estimation.

Everything here is addressed randomness (see _rng): a replication's draws are
a pure function of (master key, stream id, draw index), which gives
bit-identical results for any thread count and makes the common-random-number
pairing of the two conditional estimates exact.

Layout conventions (packed by market.pack_model / payoff.py wrappers):
  mi = [kind, d, p, physical, heston_euler]      int64
  mf = model scalars (kind-specific, see below)  float64
  fmat = factor matrix (bs-multi) or 1x1 zero    float64 2d
  s0  = spot vector (bs-multi) or [spot]         float64

  bs-multi : mf = [r, norms2_0..norms2_{d-1}]
  cev      : mf = [r, b, sigma, beta]
  heston   : mf = [r, b, kappa, m, sigma_v, rho, y_floor]

State x is the accumulated factor sum per asset for bs-multi (price is
s0_i * exp(x_i - 0.5 norms2_i t), so barrier monitoring stays in log space
and needs no exp in the hot loop); for cev/heston x[0] is the price itself.
"""

import numpy as np
from numba import njit, prange

from ._fp import draw_duration_sign, inv_cdf
from ._rng import philox4, _INV53

# model kinds / payoff kinds (keep in sync with market.py / payoff.py)
K_BS = 0
K_CEV = 1
K_HESTON = 2

P_PUT = 0
P_DIGITAL = 1
P_ONETOUCH = 2
P_BLAC = 3

# stream purposes (mirrors _rng)
PP_PREFIX = 0
PP_CONT = 1
PP_EXCL = 2
PP_PHYS = 3
PP_PRICE = 4

NO_DATE = 127

MAXP = 16  # coordinate field width


@njit(cache=True, inline="always")
def _sid(rep, outer, inner, date, coord, purpose):
    c1 = np.uint64(inner | (date << 16) | (coord << 23) | (purpose << 27))
    c2 = np.uint64(rep | (outer << 16))
    return c1, c2


@njit(cache=True, inline="always")
def _advance(mi, mf, x, y, dt, physical):
    """Pure time advance (drift only); returns new y."""
    kind = mi[0]
    if kind == K_BS:
        return y  # compensator lives in the value function
    if kind == K_CEV:
        sigma = mf[2]
        beta = mf[3]
        if beta != 2.0:
            s = x[0]
            dvol = 0.5 * sigma * sigma * (beta * 0.5) * s ** (beta - 1.0)
            s = s - dvol * dt
            if physical == 1:
                s += x[0] * (mf[1] - mf[0]) * dt
            if s < 0.0:
                s = 0.0
            x[0] = s
        else:
            drift = (mf[1] - mf[0]) if physical == 1 else 0.0
            x[0] = x[0] * np.exp((drift - 0.5 * sigma * sigma) * dt)
        return y
    # heston
    kappa = mf[2]
    m = mf[3]
    if mi[4] == 0:
        y2 = m + (y * y - m) * np.exp(-2.0 * kappa * dt)
        y = np.sqrt(max(y2, 0.0))
    else:
        y = y + kappa * (m / max(y, mf[6]) - y) * dt
    if physical == 1:
        x[0] += x[0] * (mf[1] - mf[0]) * y * y * dt
    return y


@njit(cache=True, inline="always")
def _kick(mi, mf, fmat, x, y, c, w):
    """Apply increment w on coordinate c; returns new y."""
    kind = mi[0]
    if kind == K_BS:
        d = mi[1]
        for i in range(d):
            x[i] += fmat[i, c] * w
        return y
    if kind == K_CEV:
        sigma = mf[2]
        beta = mf[3]
        s = x[0]
        if beta == 2.0:
            x[0] = s * np.exp(sigma * w)
        else:
            vol = sigma * s ** (beta * 0.5)
            dvol = 0.5 * sigma * sigma * (beta * 0.5) * s ** (beta - 1.0)
            s = s + vol * w + dvol * (w * w)
            if s < 0.0:
                s = 0.0
            x[0] = s
        return y
    # heston: coordinate 0 drives the price, both feed the vol through rho
    sig = mf[4]
    rho = mf[5]
    if c == 0:
        x[0] += x[0] * y * w
        y = y + sig * rho * w
    else:
        y = y + sig * np.sqrt(1.0 - rho * rho) * w
    if y < mf[6]:
        y = mf[6]
    return y


@njit(cache=True, inline="always")
def _monitor(mi, cc, x, t, rmin, rmax, track):
    """Update running extrema with the state value at time t."""
    if track == 0:
        return
    if mi[0] == K_BS:
        d = mi[1]
        for i in range(d):
            v = x[i] - cc[i] * t
            if v < rmin[i]:
                rmin[i] = v
            if v > rmax[i]:
                rmax[i] = v
    else:
        v = x[0]
        if v < rmin[0]:
            rmin[0] = v
        if v > rmax[0]:
            rmax[0] = v


@njit(cache=True)
def _terminal(mi, mf, s0, cc, pkind, plevel, x, t, rmin, rmax):
    """Claim value at the horizon given terminal state and extrema."""
    if mi[0] == K_BS:
        s_t = s0[0] * np.exp(x[0] - cc[0] * t)
    else:
        s_t = x[0]
    if pkind == P_PUT:
        v = plevel - s_t
        return v if v > 0.0 else 0.0
    if pkind == P_DIGITAL:
        return 1.0 if s_t < plevel else 0.0
    if pkind == P_ONETOUCH:
        if mi[0] == K_BS:
            return 1.0 if rmax[0] > np.log(plevel / s0[0]) else 0.0
        return 1.0 if rmax[0] > plevel else 0.0
    # blac: pays 1 iff at most one asset ever breached the level
    d = mi[1]
    breaches = 0
    for i in range(d):
        thr = np.log(plevel / s0[i]) if mi[0] == K_BS else plevel
        if rmin[i] <= thr:
            breaches += 1
    return 1.0 if breaches <= 1 else 0.0


@njit(cache=True, inline="always")
def _needs_extrema(pkind):
    return 1 if (pkind == P_ONETOUCH or pkind == P_BLAC) else 0


@njit(cache=True)
def _init_state(mi, mf, s0, y0, cmin, cmax, x, rmin, rmax):
    """Fill working state and monitor-space extrema (carried + t=0 point)."""
    d = mi[1]
    if mi[0] == K_BS:
        for i in range(d):
            x[i] = 0.0
            lo = np.log(cmin[i] / s0[i]) if cmin[i] != np.inf else np.inf
            hi = np.log(cmax[i] / s0[i]) if cmax[i] != -np.inf else -np.inf
            rmin[i] = min(lo, 0.0)
            rmax[i] = max(hi, 0.0)
        return y0
    x[0] = s0[0]
    rmin[0] = min(cmin[0], s0[0])
    rmax[0] = max(cmax[0], s0[0])
    return y0


# ---------------------------------------------------------------------------
# plain path: fresh streams, payoff at horizon (price paths, oracles)
# ---------------------------------------------------------------------------


@njit(cache=True)
def path_payoff(k0, k1, rep, outer, date, purpose, mi, mf, fmat, s0, y0,
                k, horizon, tab, pkind, plevel, cmin, cmax, cap):
    p = mi[2]
    eps = 2.0 ** -k
    scale = eps * eps
    cc = np.zeros(MAXP)
    if mi[0] == K_BS:
        for i in range(mi[1]):
            cc[i] = 0.5 * mf[1 + i]
    x = np.zeros(MAXP)
    rmin = np.zeros(MAXP)
    rmax = np.zeros(MAXP)
    y = _init_state(mi, mf, s0, y0, cmin, cmax, x, rmin, rmax)
    track = _needs_extrema(pkind)
    physical = mi[3]

    nxt_t = np.empty(MAXP)
    nxt_w = np.empty(MAXP)
    ndraw = np.zeros(MAXP, dtype=np.int64)
    for c in range(p):
        s1, s2 = _sid(rep, outer, 0, date, c, purpose)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, 0, tab, scale)
        nxt_t[c] = dur
        nxt_w[c] = sg
        ndraw[c] = 1

    t = 0.0
    nev = 0
    while True:
        cstar = 0
        tmin = nxt_t[0]
        for c in range(1, p):
            if nxt_t[c] < tmin:
                tmin = nxt_t[c]
                cstar = c
        if tmin > horizon:
            break
        y = _advance(mi, mf, x, y, tmin - t, physical)
        y = _kick(mi, mf, fmat, x, y, cstar, eps * nxt_w[cstar])
        t = tmin
        _monitor(mi, cc, x, t, rmin, rmax, track)
        if not np.isfinite(x[0]) or (mi[0] != K_BS and x[0] < 0.0):
            return np.nan, 0
        s1, s2 = _sid(rep, outer, 0, date, cstar, purpose)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, ndraw[cstar], tab, scale)
        nxt_t[cstar] = tmin + dur
        nxt_w[cstar] = sg
        ndraw[cstar] += 1
        nev += 1
        if nev > cap:
            return np.nan, 0
    if horizon > t:
        y = _advance(mi, mf, x, y, horizon - t, physical)
    _monitor(mi, cc, x, horizon, rmin, rmax, track)
    if not np.isfinite(x[0]):
        return np.nan, 0
    return _terminal(mi, mf, s0, cc, pkind, plevel, x, horizon, rmin, rmax), 1


@njit(cache=True, parallel=True)
def price_kernel(k0, k1, n_paths, mi, mf, fmat, s0, y0, k, horizon, tab,
                 pkind, plevel, cap):
    out = np.empty(n_paths)
    ok = np.empty(n_paths, dtype=np.uint8)
    cmin = np.full(MAXP, np.inf)
    cmax = np.full(MAXP, -np.inf)
    for i in prange(n_paths):
        rep = i & 0xFFFF
        outer = i >> 16
        h, good = path_payoff(k0, k1, rep, outer, NO_DATE, PP_PRICE, mi, mf,
                              fmat, s0, y0, k, horizon, tab, pkind, plevel,
                              cmin, cmax, cap)
        out[i] = h
        ok[i] = good
    return out, ok


# ---------------------------------------------------------------------------
# paired conditional continuation (the projector estimator core)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _continue_world(k0, k1, rep, outer, date, m_inner, jc, world_incl,
                    t_start, t1j, t1m, mi, mf, fmat, s0, cc,
                    x0, y0v, rmin0, rmax0, k, horizon, tab, pkind, plevel,
                    cap):
    """Evolve one continuation world to the horizon; returns (H, ok).

    Shared randomness: coordinates other than jc take their events from the
    same streams anchored at t1j in both worlds, and jc's post-first-hit
    excursions share a stream as well.  The only randomness that differs
    between worlds is jc's first hit: realized (included world) versus
    resampled from t1m (excluded world).
    """
    p = mi[2]
    eps = 2.0 ** -k
    scale = eps * eps
    physical = mi[3]
    track = _needs_extrema(pkind)

    x = x0.copy()
    rmin = rmin0.copy()
    rmax = rmax0.copy()
    y = y0v

    nxt_t = np.empty(MAXP)
    nxt_w = np.empty(MAXP)
    ndraw = np.zeros(MAXP, dtype=np.int64)
    for c in range(p):
        s1, s2 = _sid(rep, outer, m_inner, date, c, PP_CONT)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, 0, tab, scale)
        if c == jc:
            if world_incl == 1:
                nxt_t[c] = t1j + dur
                nxt_w[c] = sg
                ndraw[c] = 1
            else:
                e1, e2 = _sid(rep, outer, m_inner, date, jc, PP_EXCL)
                dx, sx = draw_duration_sign(k0, k1, e1, e2, 0, tab, scale)
                nxt_t[c] = t1m + dx
                nxt_w[c] = sx
                ndraw[c] = 0  # next shared draw index after the differing hit
        else:
            nxt_t[c] = t1j + dur
            nxt_w[c] = sg
            ndraw[c] = 1

    t = t_start
    nev = 0
    while True:
        cstar = 0
        tmin = nxt_t[0]
        for c in range(1, p):
            if nxt_t[c] < tmin:
                tmin = nxt_t[c]
                cstar = c
        if tmin > horizon:
            break
        y = _advance(mi, mf, x, y, tmin - t, physical)
        y = _kick(mi, mf, fmat, x, y, cstar, eps * nxt_w[cstar])
        t = tmin
        _monitor(mi, cc, x, t, rmin, rmax, track)
        if not np.isfinite(x[0]) or (mi[0] != K_BS and x[0] < 0.0):
            return np.nan, 0
        s1, s2 = _sid(rep, outer, m_inner, date, cstar, PP_CONT)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, ndraw[cstar], tab, scale)
        nxt_t[cstar] = tmin + dur
        nxt_w[cstar] = sg
        ndraw[cstar] += 1
        nev += 1
        if nev > cap:
            return np.nan, 0
    if horizon > t:
        y = _advance(mi, mf, x, y, horizon - t, physical)
    _monitor(mi, cc, x, horizon, rmin, rmax, track)
    if not np.isfinite(x[0]):
        return np.nan, 0
    return _terminal(mi, mf, s0, cc, pkind, plevel, x, horizon, rmin, rmax), 1


@njit(cache=True)
def deriv_sample(k0, k1, rep, outer, date, jc, inner_n, mi, mf, fmat, s0, y0,
                 k, horizon, tab, pkind, plevel, cmin, cmax, cap):
    """One outer replication of the conditional-difference ratio.

    Simulates the merged prefix to the first jc-hit, then runs inner_n paired
    continuations with and without that hit, and returns
      sample = (mean_incl - mean_excl) / (2**-k eta),
      vbar   = mean_excl (a conditional price estimate, reused upstream),
      ok flag.
    A first hit beyond the horizon contributes zero by truncation.
    """
    p = mi[2]
    eps = 2.0 ** -k
    scale = eps * eps
    physical = mi[3]
    cc = np.zeros(MAXP)
    if mi[0] == K_BS:
        for i in range(mi[1]):
            cc[i] = 0.5 * mf[1 + i]
    track = _needs_extrema(pkind)

    x = np.zeros(MAXP)
    rmin = np.zeros(MAXP)
    rmax = np.zeros(MAXP)
    y = _init_state(mi, mf, s0, y0, cmin, cmax, x, rmin, rmax)

    nxt_t = np.empty(MAXP)
    nxt_w = np.empty(MAXP)
    ndraw = np.zeros(MAXP, dtype=np.int64)
    for c in range(p):
        s1, s2 = _sid(rep, outer, 0, date, c, PP_PREFIX)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, 0, tab, scale)
        nxt_t[c] = dur
        nxt_w[c] = sg
        ndraw[c] = 1

    t = 0.0
    nev = 0
    while True:
        cstar = 0
        tmin = nxt_t[0]
        for c in range(1, p):
            if nxt_t[c] < tmin:
                tmin = nxt_t[c]
                cstar = c
        if tmin > horizon:
            # the differentiated coordinate cannot hit inside the window any
            # more: its contribution truncates to zero, and the claim value
            # is already determined by the frozen prefix
            _advance(mi, mf, x, y, horizon - t, physical)
            _monitor(mi, cc, x, horizon, rmin, rmax, track)
            h = _terminal(mi, mf, s0, cc, pkind, plevel, x, horizon, rmin,
                          rmax)
            return 0.0, h, 1
        if cstar == jc:
            t1m = t
            t1j = tmin
            eta = nxt_w[jc]
            break
        y = _advance(mi, mf, x, y, tmin - t, physical)
        y = _kick(mi, mf, fmat, x, y, cstar, eps * nxt_w[cstar])
        t = tmin
        _monitor(mi, cc, x, t, rmin, rmax, track)
        if not np.isfinite(x[0]) or (mi[0] != K_BS and x[0] < 0.0):
            return np.nan, np.nan, 0
        s1, s2 = _sid(rep, outer, 0, date, cstar, PP_PREFIX)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, ndraw[cstar], tab, scale)
        nxt_t[cstar] = tmin + dur
        nxt_w[cstar] = sg
        ndraw[cstar] += 1
        nev += 1
        if nev > cap:
            return np.nan, np.nan, 0

    # excluded-world base state: everything realized strictly before the hit
    x_ex = x.copy()
    rmin_ex = rmin.copy()
    rmax_ex = rmax.copy()
    y_ex = y

    # included-world base state: advance to the hit and apply it
    y_in = _advance(mi, mf, x, y, t1j - t1m, physical)
    y_in = _kick(mi, mf, fmat, x, y_in, jc, eps * eta)
    _monitor(mi, cc, x, t1j, rmin, rmax, track)
    if not np.isfinite(x[0]) or (mi[0] != K_BS and x[0] < 0.0):
        return np.nan, np.nan, 0

    sum_in = 0.0
    sum_ex = 0.0
    for m in range(inner_n):
        h_in, ok1 = _continue_world(k0, k1, rep, outer, date, m, jc, 1,
                                    t1j, t1j, t1m, mi, mf, fmat, s0, cc,
                                    x, y_in, rmin, rmax, k, horizon, tab,
                                    pkind, plevel, cap)
        h_ex, ok2 = _continue_world(k0, k1, rep, outer, date, m, jc, 0,
                                    t1m, t1j, t1m, mi, mf, fmat, s0, cc,
                                    x_ex, y_ex, rmin_ex, rmax_ex, k, horizon,
                                    tab, pkind, plevel, cap)
        if ok1 == 0 or ok2 == 0:
            return np.nan, np.nan, 0
        sum_in += h_in
        sum_ex += h_ex
    mean_in = sum_in / inner_n
    mean_ex = sum_ex / inner_n
    return (mean_in - mean_ex) / (eps * eta), mean_ex, 1


@njit(cache=True, parallel=True)
def hedge_kernel(k0, k1, jc, outer_n, inner_n, mi, mf, fmat, s0, y0, k,
                 horizon, tab, pkind, plevel, cap):
    """Outer replications of deriv_sample at time zero (parallel, slotted)."""
    out = np.empty(outer_n)
    vout = np.empty(outer_n)
    ok = np.empty(outer_n, dtype=np.uint8)
    cmin = np.full(MAXP, np.inf)
    cmax = np.full(MAXP, -np.inf)
    for o in prange(outer_n):
        s, v, good = deriv_sample(k0, k1, o, 0, NO_DATE, jc, inner_n, mi, mf,
                                  fmat, s0, y0, k, horizon, tab, pkind,
                                  plevel, cmin, cmax, cap)
        out[o] = s
        vout[o] = v
        ok[o] = good
    return out, vout, ok


# ---------------------------------------------------------------------------
# dynamic hedging backtest
# ---------------------------------------------------------------------------


@njit(cache=True)
def _physical_path(k0, k1, rep, mi, mf, fmat, s0, y0, k, horizon, tab,
                   pkind, plevel, dates, s_dates, y_dates, cmin_dates,
                   cmax_dates, cap):
    """Physical path recording state and price-space extrema at each date.

    s_dates has one row per calendar point (including the terminal date).
    Returns (H, ok).
    """
    p = mi[2]
    d = mi[1]
    eps = 2.0 ** -k
    scale = eps * eps
    physical = mi[3]
    cc = np.zeros(MAXP)
    if mi[0] == K_BS:
        for i in range(d):
            cc[i] = 0.5 * mf[1 + i]
    x = np.zeros(MAXP)
    rmin = np.zeros(MAXP)
    rmax = np.zeros(MAXP)
    cmin0 = np.full(MAXP, np.inf)
    cmax0 = np.full(MAXP, -np.inf)
    y = _init_state(mi, mf, s0, y0, cmin0, cmax0, x, rmin, rmax)
    # path-dependent claims are always monitored here; the date records feed
    # the shifted estimators their carried extrema
    track = 1

    nxt_t = np.empty(MAXP)
    nxt_w = np.empty(MAXP)
    ndraw = np.zeros(MAXP, dtype=np.int64)
    for c in range(p):
        s1, s2 = _sid(rep, 0, 0, NO_DATE, c, PP_PHYS)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, 0, tab, scale)
        nxt_t[c] = dur
        nxt_w[c] = sg
        ndraw[c] = 1

    n_dates = dates.shape[0]
    idate = 0
    t = 0.0
    nev = 0
    while True:
        cstar = 0
        tmin = nxt_t[0]
        for c in range(1, p):
            if nxt_t[c] < tmin:
                tmin = nxt_t[c]
                cstar = c
        # record calendar points strictly before this event and the horizon;
        # the state at a date is the state at the last event at or before it
        while idate < n_dates and dates[idate] < tmin and dates[idate] < horizon:
            for i in range(d):
                if mi[0] == K_BS:
                    s_dates[idate, i] = s0[i] * np.exp(x[i] - cc[i] * dates[idate])
                    cmin_dates[idate, i] = s0[i] * np.exp(rmin[i])
                    cmax_dates[idate, i] = s0[i] * np.exp(rmax[i])
                else:
                    s_dates[idate, i] = x[0]
                    cmin_dates[idate, i] = rmin[0]
                    cmax_dates[idate, i] = rmax[0]
            y_dates[idate] = y
            idate += 1
        if tmin > horizon:
            break
        y = _advance(mi, mf, x, y, tmin - t, physical)
        y = _kick(mi, mf, fmat, x, y, cstar, eps * nxt_w[cstar])
        t = tmin
        _monitor(mi, cc, x, t, rmin, rmax, track)
        if not np.isfinite(x[0]) or (mi[0] != K_BS and x[0] < 0.0):
            return np.nan, 0
        s1, s2 = _sid(rep, 0, 0, NO_DATE, cstar, PP_PHYS)
        dur, sg = draw_duration_sign(k0, k1, s1, s2, ndraw[cstar], tab, scale)
        nxt_t[cstar] = tmin + dur
        nxt_w[cstar] = sg
        ndraw[cstar] += 1
        nev += 1
        if nev > cap:
            return np.nan, 0
    if horizon > t:
        y = _advance(mi, mf, x, y, horizon - t, physical)
    _monitor(mi, cc, x, horizon, rmin, rmax, track)
    # remaining points (the terminal date) take the horizon state
    while idate < n_dates:
        for i in range(d):
            if mi[0] == K_BS:
                s_dates[idate, i] = s0[i] * np.exp(x[i] - cc[i] * dates[idate])
                cmin_dates[idate, i] = s0[i] * np.exp(rmin[i])
                cmax_dates[idate, i] = s0[i] * np.exp(rmax[i])
            else:
                s_dates[idate, i] = x[0]
                cmin_dates[idate, i] = rmin[0]
                cmax_dates[idate, i] = rmax[0]
        y_dates[idate] = y
        idate += 1
    if not np.isfinite(x[0]):
        return np.nan, 0
    return _terminal(mi, mf, s0, cc, pkind, plevel, x, horizon, rmin, rmax), 1


@njit(cache=True)
def _local_vol(mi, mf, fmat, s, y):
    """(diag(S) sigma) for a 1-d model at the given state."""
    if mi[0] == K_CEV:
        return mf[2] * s ** (mf[3] * 0.5)
    return s * y


@njit(cache=True, parallel=True)
def backtest_kernel(k0, k1, n_sims, mi_p, mf_p, mi_q, mf_q, fmat, s0, y0,
                    k, horizon, tab, pkind, plevel, dates, outer_n, inner_n,
                    price0, zeta, z0, use_mv, cap):
    """Replicated hedging backtest for one-dimensional models (d = 1).

    For each replication: physical path, per-date shifted hedge estimates
    under the hedging measure, discrete gain accumulation, terminal error
    gamma = H - (price + gain).  With use_mv=1 the position is corrected by
    the variance-optimal feedback term using the deterministic zeta schedule
    and the running density proxy Z.
    """
    n_dates = dates.shape[0] - 1  # trading dates exclude the terminal point
    gamma = np.empty(n_sims)
    ok = np.empty(n_sims, dtype=np.uint8)
    thetas = np.zeros((n_sims, n_dates))
    for r in prange(n_sims):
        s_dates = np.empty((n_dates + 1, 1))
        y_dates = np.empty(n_dates + 1)
        cmin_d = np.empty((n_dates + 1, 1))
        cmax_d = np.empty((n_dates + 1, 1))
        h, good = _physical_path(k0, k1, r, mi_p, mf_p, fmat, s0, y0, k,
                                 horizon, tab, pkind, plevel, dates, s_dates,
                                 y_dates, cmin_d, cmax_d, cap)
        if good == 0:
            gamma[r] = np.nan
            ok[r] = 0
            continue
        gain = 0.0
        zrun = z0
        failed = False
        s0_loc = np.empty(1)
        cmin_loc = np.full(MAXP, np.inf)
        cmax_loc = np.full(MAXP, -np.inf)
        for i in range(n_dates):
            si = s_dates[i, 0]
            yi = y_dates[i]
            rem = horizon - dates[i]
            # claim already decided by the realized prefix: hold zero
            theta = 0.0
            vbar_mean = np.nan
            decided = False
            if pkind == P_ONETOUCH and cmax_d[i, 0] > plevel:
                decided = True
                vbar_mean = 1.0
            if not decided:
                s0_loc[0] = si
                cmin_loc[0] = cmin_d[i, 0]
                cmax_loc[0] = cmax_d[i, 0]
                ssum = 0.0
                vsum = 0.0
                nok = 0
                for o in range(outer_n):
                    smp, vb, g2 = deriv_sample(k0, k1, r, o, i, 0, inner_n,
                                               mi_q, mf_q, fmat, s0_loc, yi,
                                               k, rem, tab, pkind, plevel,
                                               cmin_loc, cmax_loc, cap)
                    if g2 == 0:
                        failed = True
                        break
                    ssum += smp
                    vsum += vb
                    nok += 1
                if failed:
                    break
                phi = ssum / nok
                vbar_mean = vsum / nok
                sv = _local_vol(mi_q, mf_q, fmat, si, yi)
                theta = phi / sv if phi != 0.0 else 0.0
            position = theta
            if use_mv == 1:
                if i > 0 and zeta[i] != 0.0:
                    if zrun <= 1e-10 * z0:
                        failed = True
                        break
                    position = theta - (zeta[i] / zrun) * (vbar_mean - price0
                                                           - gain)
            ds = s_dates[i + 1, 0] - si
            gain += position * ds
            if use_mv == 1:
                zrun += zeta[i] * ds
            thetas[r, i] = position
        if failed:
            gamma[r] = np.nan
            ok[r] = 0
        else:
            gamma[r] = h - (price0 + gain)
            ok[r] = 1
    return gamma, ok, thetas
