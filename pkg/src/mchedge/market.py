"""Market models stepped along a level-crossing grid.

The grid's +-2**-k jumps stand in for the driving Brownian increments.  At
each merged event exactly one coordinate carries a nonzero increment; the
others see only the elapsed time.

Schemes per model kind:
  * multi Black-Scholes: exact log-normal update through the factor matrix,
    S_i <- S_i * exp(F[i,c] w - 0.5 ||F_i||^2 dt);
  * CEV: Milstein on dS = sigma S^(beta/2) dW (exact GBM update when beta=2);
  * Heston (Y = sqrt of instantaneous variance): the Y drift
    kappa (m/Y - Y) dt is integrated exactly between events via
    Y^2 -> m + (Y^2 - m) exp(-2 kappa dt), followed by the diffusion kick
    sigma dZ, dZ = rho dW1 + sqrt(1-rho^2) dW2.  A plain Euler drift step is
    available as scheme="euler" but is prone to overshooting near Y ~ 0; see
    README.  S itself is stepped additively (S <- S + S Y dW1), which keeps
    the discounted price an exact martingale under the hedging measures.

Drift of the traded asset is applied under the physical measure only; under
the minimal-martingale / variance-optimal measures the discounted price is a
local martingale by construction.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

# model kinds
BS_MULTI = "bs-multi"
CEV = "cev"
HESTON = "heston"

# measures
PHYSICAL = "physical"
MINIMAL = "minimal-martingale"
VARIANCE_OPTIMAL = "variance-optimal"

_MEASURES = (PHYSICAL, MINIMAL, VARIANCE_OPTIMAL)

HESTON_Y_FLOOR = 1e-8


@dataclass(frozen=True)
class MarketModel:
    """Tagged model: kind, dimensions, parameters and simulation measure.

    d traded coordinates drive prices; p >= d is the total number of Brownian
    coordinates (Heston adds one for the volatility noise).
    """

    kind: str
    d: int
    p: int
    measure: str = MINIMAL
    # bs-multi
    s0: Optional[np.ndarray] = None
    sigma_norms: Optional[np.ndarray] = None
    corr: Optional[np.ndarray] = None
    # cev / heston scalars
    s0_scalar: float = 0.0
    sigma: float = 0.0
    beta: float = 0.0
    y0: float = 0.0
    kappa: float = 0.0
    theta: float = 0.0
    rho: float = 0.0
    r: float = 0.0
    b: float = 0.0
    heston_scheme: str = "drift-exact"
    y_floor: float = HESTON_Y_FLOOR

    def __post_init__(self):
        if self.measure not in _MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")

    # -- derived quantities ------------------------------------------------

    @property
    def m(self):
        """Heston Y-drift centre: theta - sigma^2 / (2 kappa)."""
        return self.theta - self.sigma ** 2 / (2.0 * self.kappa)

    def factor_matrix(self):
        """d x d loading matrix F with rows F_i = ||sigma_i|| * chol(corr)_i."""
        if self.kind != BS_MULTI:
            raise ValueError("factor matrix only defined for bs-multi")
        chol = np.linalg.cholesky(self.corr)
        return self.sigma_norms[:, None] * chol

    def spot_vol_matrix(self, s, y=None):
        """diag(S) sigma at the given state (d x d)."""
        if self.kind == BS_MULTI:
            return np.asarray(s)[:, None] * self.factor_matrix()
        if self.kind == CEV:
            return np.array([[self.sigma * float(s) ** (self.beta / 2.0)]])
        return np.array([[float(s) * float(y)]])

    def initial_state(self):
        if self.kind == BS_MULTI:
            return np.array(self.s0, dtype=float), 0.0
        return np.array([self.s0_scalar], dtype=float), self.y0


def black_scholes_multi(s0, sigma_norms, corr, r=0.0, measure=MINIMAL):
    s0 = np.asarray(s0, dtype=float)
    norms = np.asarray(sigma_norms, dtype=float)
    corr = np.asarray(corr, dtype=float)
    d = s0.size
    if norms.size != d or corr.shape != (d, d):
        raise ValueError("inconsistent dimensions")
    if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
        raise ValueError("correlation matrix must be symmetric with unit diagonal")
    np.linalg.cholesky(corr)  # raises if not positive definite
    if np.any(s0 <= 0.0):
        raise ValueError("initial prices must be positive")
    return MarketModel(BS_MULTI, d, d, measure, s0=s0, sigma_norms=norms,
                       corr=corr, r=r)


def cev(s0, sigma, beta, r=0.0, b=0.0, measure=MINIMAL):
    if s0 <= 0.0 or sigma <= 0.0:
        raise ValueError("s0 and sigma must be positive")
    return MarketModel(CEV, 1, 1, measure, s0_scalar=float(s0),
                       sigma=float(sigma), beta=float(beta), r=float(r),
                       b=float(b))


def heston(s0, y0, kappa, theta, sigma, rho, r=0.0, b=0.0, measure=MINIMAL,
           scheme="drift-exact"):
    if min(s0, y0, kappa, theta, sigma) <= 0.0:
        raise ValueError("s0, y0, kappa, theta, sigma must be strictly positive")
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    if scheme not in ("drift-exact", "euler"):
        raise ValueError("heston scheme must be 'drift-exact' or 'euler'")
    model = MarketModel(HESTON, 1, 2, measure, s0_scalar=float(s0),
                        y0=float(y0), kappa=float(kappa), theta=float(theta),
                        sigma=float(sigma), rho=float(rho), r=float(r),
                        b=float(b), heston_scheme=scheme)
    if not np.isfinite(model.m):
        raise ValueError("non-finite Y-drift centre")
    return model


# ---------------------------------------------------------------------------
# reference stepping (mirrors the compiled kernels; used by tests and the
# public simulate_path API)
# ---------------------------------------------------------------------------


class StepError(RuntimeError):
    """State became non-finite or invalid after a step."""


def step_price(model, state, dt, increments):
    """Advance (S, Y) over dt with the given increment vector.

    increments has one entry per Brownian coordinate; at a skeleton event
    exactly one entry is +-2**-k and the rest are zero.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    s, y = state
    s = np.array(s, dtype=float)
    inc = np.asarray(increments, dtype=float)
    physical = model.measure == PHYSICAL
    if model.kind == BS_MULTI:
        f = model.factor_matrix()
        norms2 = model.sigma_norms ** 2
        s = s * np.exp(f @ inc - 0.5 * norms2 * dt)
        y_new = 0.0
    elif model.kind == CEV:
        w = inc[0]
        x = s[0]
        if model.beta == 2.0:
            drift = (model.b - model.r) if physical else 0.0
            x = x * np.exp((drift - 0.5 * model.sigma ** 2) * dt
                           + model.sigma * w)
        else:
            vol = model.sigma * x ** (model.beta / 2.0)
            dvol = 0.5 * model.sigma ** 2 * (model.beta / 2.0) \
                * x ** (model.beta - 1.0)
            x = x + vol * w + dvol * (w * w - dt)
            if physical:
                x += s[0] * (model.b - model.r) * dt
            x = max(x, 0.0)
        s = np.array([x])
        y_new = 0.0
    else:  # heston
        w1, w2 = inc[0], inc[1]
        kappa, m, sig = model.kappa, model.m, model.sigma
        if model.heston_scheme == "drift-exact":
            y2 = m + (y * y - m) * np.exp(-2.0 * kappa * dt)
            y_new = np.sqrt(max(y2, 0.0))
        else:
            y_new = y + kappa * (m / max(y, model.y_floor) - y) * dt
        x = s[0]
        if physical:
            x += x * (model.b - model.r) * y_new * y_new * dt
        x += x * y_new * w1
        y_new += sig * (model.rho * w1 + np.sqrt(1.0 - model.rho ** 2) * w2)
        y_new = max(y_new, model.y_floor)
        s = np.array([x])
    if not np.all(np.isfinite(s)) or np.any(s < 0.0):
        raise StepError("non-finite or negative price after step")
    return s, y_new


@dataclass(frozen=True)
class StatePath:
    """States recorded at every grid event and at the horizon."""

    grid: "object"
    times: np.ndarray     # event times plus horizon
    prices: np.ndarray    # (n_events + 1, d)
    vols: np.ndarray      # (n_events + 1,)  Heston Y level, else zeros
    initial_prices: np.ndarray
    initial_vol: float

    def price_at(self, t):
        """Piecewise-constant state: value at the last event <= t."""
        idx = np.searchsorted(self.times[:-1], t, side="right") - 1
        if idx < 0:
            return self.initial_prices
        return self.prices[idx]


def simulate_path(model, grid, initial_state=None):
    """Fold step_price over the grid; records state per event and at horizon."""
    if model.p != grid.p:
        raise ValueError(f"model needs {model.p} coordinates, grid has {grid.p}")
    if initial_state is None:
        s, y = model.initial_state()
    else:
        s, y = np.array(initial_state[0], dtype=float), float(initial_state[1])
    s0, y0c = s.copy(), y
    n = grid.n_events
    prices = np.empty((n + 1, model.d))
    vols = np.empty(n + 1)
    t_prev = 0.0
    inc = np.zeros(model.p)
    for i in range(n):
        te = grid.times[i]
        c = int(grid.coords[i]) - 1
        inc[:] = 0.0
        inc[c] = 2.0 ** -grid.k * grid.signs[i]
        s, y = step_price(model, (s, y), te - t_prev, inc)
        prices[i] = s
        vols[i] = y
        t_prev = te
    if grid.horizon > t_prev:
        inc[:] = 0.0
        s, y = step_price(model, (s, y), grid.horizon - t_prev, inc)
    prices[n] = s
    vols[n] = y
    times = np.append(grid.times, grid.horizon)
    return StatePath(grid, times, prices, vols, s0, y0c)


def shift_model(model, observed_prices, observed_vol=0.0, measure=None):
    """Re-root the model at an observed state for conditional simulation.

    Strong Markov restart: same dynamics, new initial state, and (optionally)
    a different simulation measure for the inner estimator.
    """
    target = measure if measure is not None else model.measure
    if model.kind == BS_MULTI:
        return replace(model, measure=target,
                       s0=np.array(observed_prices, dtype=float))
    if model.kind == CEV:
        return replace(model, measure=target,
                       s0_scalar=float(np.atleast_1d(observed_prices)[0]))
    return replace(model, measure=target,
                   s0_scalar=float(np.atleast_1d(observed_prices)[0]),
                   y0=float(observed_vol))
