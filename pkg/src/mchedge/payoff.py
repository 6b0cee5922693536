"""Discounted claims evaluated on simulated paths.

Path-dependent claims are monitored at grid event times and at the horizon
(no continuous-time bridge correction: the estimand lives on the grid).
Running extrema can be carried in from an already-realized path prefix so
that conditional continuations monitor barriers correctly.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

EUROPEAN_PUT = "european-put"
DIGITAL = "digital"
ONE_TOUCH = "one-touch"
BLAC_DOWN_OUT = "blac-down-out"


@dataclass(frozen=True)
class PayoffSpec:
    kind: str
    strike: float = 0.0    # K for put/digital
    barrier: float = 0.0   # B for one-touch, L for blac

    def __post_init__(self):
        if self.kind in (EUROPEAN_PUT, DIGITAL):
            if self.strike <= 0.0:
                raise ValueError("strike must be strictly positive")
        elif self.kind in (ONE_TOUCH, BLAC_DOWN_OUT):
            if self.barrier <= 0.0:
                raise ValueError("barrier must be strictly positive")
        else:
            raise ValueError(f"unknown payoff kind {self.kind!r}")

    @property
    def level(self):
        return self.strike if self.kind in (EUROPEAN_PUT, DIGITAL) else self.barrier


def european_put(strike):
    return PayoffSpec(EUROPEAN_PUT, strike=strike)


def digital(strike):
    return PayoffSpec(DIGITAL, strike=strike)


def one_touch(barrier):
    return PayoffSpec(ONE_TOUCH, barrier=barrier)


def blac_down_out(barrier):
    return PayoffSpec(BLAC_DOWN_OUT, barrier=barrier)


def evaluate(payoff, path, carried_min=None, carried_max=None):
    """Claim value on a StatePath, optionally merging carried extrema.

    carried_min / carried_max are per-asset running extrema realized before
    the path started (shifted-estimator conditioning).
    """
    prices = path.prices
    terminal = prices[-1]
    if payoff.kind == EUROPEAN_PUT:
        return max(payoff.strike - terminal[0], 0.0)
    if payoff.kind == DIGITAL:
        return 1.0 if terminal[0] < payoff.strike else 0.0
    monitored_max = max(float(path.initial_prices[0]), float(prices[:, 0].max()))
    monitored_min = np.minimum(path.initial_prices, prices.min(axis=0))
    if carried_max is not None:
        monitored_max = max(monitored_max, float(np.atleast_1d(carried_max)[0]))
    if carried_min is not None:
        monitored_min = np.minimum(monitored_min, carried_min)
    if payoff.kind == ONE_TOUCH:
        return 1.0 if monitored_max > payoff.barrier else 0.0
    return blac_indicator(monitored_min, payoff.barrier)


def blac_indicator(per_asset_min, level):
    """Product over unordered asset pairs of 1{min_i v min_j > L}.

    "v" is max: the pair survives when at least one member never breached.
    Equivalently the claim pays 1 iff at most one asset breached the level.
    """
    value = 1.0
    m = np.asarray(per_asset_min, dtype=float)
    d = m.size
    for i in range(d):
        for j in range(i + 1, d):
            if max(m[i], m[j]) <= level:
                value = 0.0
    return value


def short_circuit(payoff, carried_min=None, carried_max=None):
    """Constant conditional value forced by the realized prefix, if any.

    Returns None when the claim is still undetermined.  A knocked-in
    one-touch is worth 1 regardless of the future; a basket with two or more
    breached assets is worth 0.
    """
    if payoff.kind == ONE_TOUCH and carried_max is not None:
        if float(np.atleast_1d(carried_max)[0]) > payoff.barrier:
            return 1.0
    if payoff.kind == BLAC_DOWN_OUT and carried_min is not None:
        m = np.asarray(carried_min, dtype=float)
        if np.sum(m <= payoff.barrier) >= 2:
            return 0.0
    return None
