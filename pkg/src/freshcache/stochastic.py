"""Seeded randomness: per-item request renewal streams and lazy version counting.

Every (item, purpose) pair draws from its own PCG64 substream derived from the
master seed through ``SeedSequence`` spawn keys, so consuming one item's stream
never perturbs another's and results do not depend on event processing order.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgumentError

PURPOSES = {"arrivals": 0, "versions": 1, "exploration": 2, "shift": 3, "kernel": 4}

# gamma draws with shape << 1 underflow to 0.0 in float64; keep them strictly positive
MIN_INTERARRIVAL = np.finfo(float).tiny


def make_stream(seed, item=0, purpose="arrivals", phase=0):
    """Independent generator for ``(seed, item, purpose, phase)``."""
    try:
        pid = PURPOSES[purpose]
    except KeyError:
        raise InvalidArgumentError(f"unknown stream purpose {purpose!r}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=(pid, int(item), int(phase)))
    return np.random.Generator(np.random.PCG64(ss))


def interarrivals(stream, shape, item_rate, size):
    """``size`` interarrival times with mean ``1/item_rate``.

    Exponential when ``shape == 1``; otherwise Gamma(shape, scale=1/(shape*item_rate)),
    whose variance is ``1/(shape*item_rate**2)``.
    """
    if not item_rate > 0:
        raise InvalidArgumentError(f"item_rate must be > 0, got {item_rate}")
    if not shape > 0:
        raise InvalidArgumentError(f"shape must be > 0, got {shape}")
    if shape == 1.0:
        x = stream.standard_exponential(size) / item_rate
    else:
        x = stream.standard_gamma(shape, size) / (shape * item_rate)
    return np.maximum(x, MIN_INTERARRIVAL)


def next_interarrival(stream, shape, item_rate):
    """Single interarrival draw; see :func:`interarrivals`."""
    return float(interarrivals(stream, shape, item_rate, 1)[0])


class VersionClock:
    """Backend version counters advanced lazily by Poisson increments."""

    def __init__(self, n_items, start_time=0.0):
        self.backend_version = np.zeros(n_items, dtype=np.int64)
        self.last_advanced_at = np.full(n_items, float(start_time))

    def advance(self, item, to_time, rate, stream):
        return advance_version(self, item, to_time, rate, stream)


def advance_version(clock, item, to_time, rate, stream):
    """Advance ``item``'s backend version to ``to_time`` and return the new count.

    The increment is Poisson(rate * elapsed), so splitting an interval into
    consecutive calls leaves the distribution of the total unchanged.
    """
    last = clock.last_advanced_at[item]
    if to_time < last:
        raise InvalidArgumentError(
            f"cannot move version clock of item {item} back from {last} to {to_time}"
        )
    if rate < 0:
        raise InvalidArgumentError(f"refresh rate must be >= 0, got {rate}")
    dt = to_time - last
    if dt > 0 and rate > 0:
        clock.backend_version[item] += stream.poisson(rate * dt)
    clock.last_advanced_at[item] = to_time
    return int(clock.backend_version[item])


class RequestStream:
    """Request instants of one item together with the backend version at each.

    Draws are made in blocks from two dedicated substreams (arrivals and
    versions). Block size only changes the float rounding of the cumulative
    request times, not the underlying draws.
    """

    def __init__(self, seed, item, rate, shape, refresh_rate, start_time=0.0,
                 start_version=0, phase=0, block=256):
        self.item = int(item)
        self.rate = float(rate)
        self.shape = float(shape)
        self.refresh_rate = float(refresh_rate)
        self.block = int(block)
        self._arrivals = make_stream(seed, item, "arrivals", phase)
        self._versions = make_stream(seed, item, "versions", phase)
        self._times = np.empty(0)
        self._vers = np.empty(0, dtype=np.int64)
        self._pos = 0
        self._last_time = float(start_time)
        self._last_version = int(start_version)

    def _refill(self):
        gaps = interarrivals(self._arrivals, self.shape, self.rate, self.block)
        times = self._last_time + np.cumsum(gaps)
        if self.refresh_rate > 0:
            steps = np.diff(times, prepend=self._last_time)
            incr = self._versions.poisson(self.refresh_rate * steps)
        else:
            incr = np.zeros(self.block, dtype=np.int64)
        vers = self._last_version + np.cumsum(incr)
        self._last_time = float(times[-1])
        self._last_version = int(vers[-1])
        self._times, self._vers, self._pos = times, vers, 0

    def next(self):
        """Return ``(time, version)`` of the next request."""
        if self.rate <= 0:
            return np.inf, 0
        if self._pos >= self._times.shape[0]:
            self._refill()
        i = self._pos
        self._pos += 1
        return float(self._times[i]), int(self._vers[i])

    def arrays_until(self, horizon):
        """All remaining requests up to and including the first one past ``horizon``."""
        ts, vs = [], []
        while True:
            t, v = self.next()
            ts.append(t)
            vs.append(v)
            if t >= horizon:
                break
        return np.asarray(ts), np.asarray(vs, dtype=np.int64)
