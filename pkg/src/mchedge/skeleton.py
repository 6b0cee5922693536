"""Random level-crossing grids driving the whole engine.

A coordinate's clock is the sequence of successive times at which a Brownian
coordinate moves +-2**-k from its last recorded position, together with the
move directions.  Merging the clocks of all p coordinates (ordered by time,
ties broken by coordinate index) gives the grid on which prices are stepped,
claims are monitored and hedge ratios are estimated.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _fp
from ._rng import PhiloxStream

DEFAULT_EVENT_CAP = 10_000_000


class EventCapExceeded(RuntimeError):
    """A clock needed more events than the configured guard allows."""


@dataclass(frozen=True)
class LevelCrossingClock:
    """One coordinate's crossing times and directions."""

    k: int
    coordinate: int
    times: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.signs, dtype=float)
        if t.shape != s.shape:
            raise ValueError("times and signs must have equal length")
        if t.size and (t[0] <= 0.0 or np.any(np.diff(t) <= 0.0)):
            raise ValueError("times must be strictly increasing and positive")
        if not np.all(np.abs(s) == 1.0):
            raise ValueError("signs must be +-1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "signs", s)

    def walk_values(self):
        """Walk position after each event: 2**-k * cumulative sign sum."""
        return 2.0 ** -self.k * np.cumsum(self.signs)


@dataclass(frozen=True)
class SkeletonGrid:
    """Merged multi-coordinate partition up to a horizon."""

    k: int
    p: int
    horizon: float
    times: np.ndarray = field(repr=False)
    coords: np.ndarray = field(repr=False)
    signs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.times.size and self.times[-1] > self.horizon:
            raise ValueError("grid events must not exceed the horizon")

    @property
    def n_events(self):
        return self.times.size

    def restrict(self, coordinate):
        mask = self.coords == coordinate
        return self.times[mask], self.signs[mask]


def sample_first_passage(rng_stream: PhiloxStream, k: int):
    """Draw one crossing: (duration, sign).

    duration is distributed as 4**-k times the first exit time of a standard
    Brownian motion from [-1, 1]; sign is +-1 with probability 1/2 each,
    independent of the duration.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    u, v = rng_stream.uniform_pair()
    dur = _fp.inv_cdf(u, _fp.table()) * 4.0 ** -k
    return dur, (1.0 if v < 0.5 else -1.0)


def extend_clock(clock, horizon, rng_stream, event_cap=DEFAULT_EVENT_CAP):
    """Extend (or create, passing clock=None) a clock strictly past horizon.

    The returned clock keeps exactly one event beyond the horizon; downstream
    truncation logic needs to know whether the next hit falls outside the
    window.  Raises EventCapExceeded past event_cap events.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if clock is None:
        raise ValueError("clock must carry k and coordinate; use new_clock")
    times = list(clock.times)
    signs = list(clock.signs)
    t = times[-1] if times else 0.0
    while t <= horizon:
        if len(times) >= event_cap:
            raise EventCapExceeded(
                f"coordinate {clock.coordinate}: more than {event_cap} events "
                f"before horizon {horizon} at k={clock.k}")
        dur, sign = sample_first_passage(rng_stream, clock.k)
        t += dur
        times.append(t)
        signs.append(sign)
    return LevelCrossingClock(clock.k, clock.coordinate,
                              np.array(times), np.array(signs))


def new_clock(k, coordinate, horizon, rng_stream, event_cap=DEFAULT_EVENT_CAP):
    """Sample a fresh clock covering [0, horizon] plus one overshoot event."""
    empty = LevelCrossingClock(k, coordinate, np.empty(0), np.empty(0))
    return extend_clock(empty, horizon, rng_stream, event_cap)


def merge_partition(clocks, horizon):
    """Union of all per-coordinate events with time <= horizon, sorted.

    Equal floating-point times (probability zero in the model) are ordered by
    ascending coordinate index, so the merge is deterministic.
    """
    if not clocks:
        raise ValueError("need at least one clock")
    ks = {c.k for c in clocks}
    if len(ks) != 1:
        raise ValueError("clocks must share the same k")
    for c in clocks:
        if c.times.size == 0 or c.times[-1] <= horizon:
            raise ValueError(
                f"coordinate {c.coordinate} clock must extend past horizon")
    times = np.concatenate([c.times for c in clocks])
    coords = np.concatenate([np.full(c.times.size, c.coordinate) for c in clocks])
    signs = np.concatenate([c.signs for c in clocks])
    order = np.lexsort((coords, times))
    times, coords, signs = times[order], coords[order], signs[order]
    keep = times <= horizon
    return SkeletonGrid(ks.pop(), len(clocks), horizon,
                        times[keep], coords[keep].astype(np.int64), signs[keep])


def reconstruct_walk(grid, j):
    """Step path of coordinate j: jump times and post-jump values.

    Values are 2**-k * (partial sign sums); jump sizes are exactly +-2**-k.
    """
    if not (1 <= j <= grid.p):
        raise ValueError("coordinate out of range")
    times, signs = grid.restrict(j)
    return times, 2.0 ** -grid.k * np.cumsum(signs)
