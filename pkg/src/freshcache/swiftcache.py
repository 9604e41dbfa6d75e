"""SwiftCache: model-based online timer caching.

The policy knows nothing about popularity, refresh rates or demand. It keeps
exponentially weighted estimates of each item's interarrival time (``eit``)
and refresh rate (``lam_hat``) and plugs them into the optimal-timer formula
each time it fetches. A global multiplier ``alpha`` grows with the smoothed
occupancy excess over the budget and shortens timers accordingly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidArgumentError
from .validation import check_budget, check_positive, check_unit_interval

LAMBDA_ESTIMATORS = ("version_delta", "aov_verbatim", "aov_rate")


class VersionReading(NamedTuple):
    """What a fetch reveals: the backend version counter and the cached copy's age."""

    backend_version: int
    age: int


def swift_timer(eit, lam_hat, size, fetch_cost, aging_cost, alpha, tau_max):
    """Holding time from estimated interarrival time and refresh rate.

    ``eit * [sqrt(1 + 2 b (c_f - eit*alpha) / (c_a lam_hat eit)) - 1]^+``, capped at
    ``tau_max``. Zero estimates (no data yet) map to ``tau_max``.
    """
    if eit <= 0.0 or lam_hat <= 0.0:
        return tau_max
    margin = fetch_cost - eit * alpha
    if margin <= 0.0:
        return 0.0
    x = 2.0 * size * margin / (aging_cost * lam_hat * eit)
    tau = eit * x / (math.sqrt(1.0 + x) + 1.0)
    return min(tau, tau_max)


@dataclass
class SwiftCacheState:
    eit: list
    lam_hat: list
    last_age: list
    last_fetch: list
    last_request: list
    timers: list
    occupancy_avg: float = 0.0
    occupancy_obs: float = 0.0
    alpha: float = 0.0
    theta: float = 0.005
    max_eit: float = 0.0
    max_eit_item: int = -1
    clock: float = field(default=-math.inf)

    @classmethod
    def initial(cls, n_items, theta):
        zeros = [0.0] * n_items
        return cls(
            eit=list(zeros), lam_hat=list(zeros), last_age=[0] * n_items,
            last_fetch=list(zeros), last_request=list(zeros), timers=list(zeros),
            theta=theta,
        )

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["clock"]):
            d["clock"] = None
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


class SwiftCache(BaseEstimator):
    """Model-based learning cache policy.

    Parameters
    ----------
    theta : float
        EWMA weight for every estimator.
    budget : float or None
        Occupancy budget in size units; ``None`` means unlimited.
    fetch_cost, aging_cost : float
        Per-size-unit fetch cost and per-version aging cost.
    tau_max : float
        Cap on timers, also used while estimates are still zero.
    lambda_estimator : str
        ``"version_delta"`` reads the backend version counter at a fetch and
        divides its increase since the previous fetch by the holding interval.
        ``"aov_verbatim"`` applies the same difference formula to the cached
        copy's age reading, and ``"aov_rate"`` uses ``age / t``.
    """

    def __init__(self, theta=0.005, budget=None, fetch_cost=1.0, aging_cost=0.1,
                 tau_max=1e4, lambda_estimator="version_delta"):
        self.theta = theta
        self.budget = budget
        self.fetch_cost = fetch_cost
        self.aging_cost = aging_cost
        self.tau_max = tau_max
        self.lambda_estimator = lambda_estimator

    @classmethod
    def from_scenario(cls, config, **overrides):
        params = dict(
            theta=config.swiftcache_theta,
            budget=config.capacity.budget,
            fetch_cost=config.costs.fetch_unit_cost,
            aging_cost=config.costs.aging_unit_cost,
        )
        params.update(overrides)
        return cls(**params)

    def _check_params(self):
        check_unit_interval(self.theta, "theta", closed_right=True)
        check_positive(self.fetch_cost, "fetch_cost")
        check_positive(self.aging_cost, "aging_cost")
        check_positive(self.tau_max, "tau_max")
        if self.lambda_estimator not in LAMBDA_ESTIMATORS:
            raise InvalidArgumentError(
                f"lambda_estimator must be one of {LAMBDA_ESTIMATORS}, got {self.lambda_estimator!r}"
            )

    def start_run(self, catalog):
        """Initialise state for ``catalog`` unless a state is already attached."""
        if getattr(self, "state_", None) is None:
            self.reset(catalog.sizes)
        elif len(self.state_.eit) != catalog.n_items:
            raise InvalidArgumentError("SwiftCache state does not match the catalog size")
        else:
            self.sizes_ = [float(b) for b in catalog.sizes]

    def reset(self, sizes):
        self._check_params()
        self.sizes_ = [float(b) for b in sizes]
        self.budget_ = check_budget(self.budget)
        self.state_ = SwiftCacheState.initial(len(self.sizes_), float(self.theta))
        return self

    def on_request(self, item, now, elapsed, occupancy, age_reader):
        """Process one request and return ``(fetch, timer)``.

        ``occupancy()`` returns the current size-weighted occupancy and
        ``age_reader()`` returns a :class:`VersionReading`; the latter is only
        called when the item is fetched. ``elapsed`` is ignored: the policy
        keeps its own record of the last fetch time.
        """
        st = self.state_
        if now < st.clock:
            raise InvalidArgumentError(f"request time {now} precedes previous request at {st.clock}")
        st.clock = now
        theta = st.theta
        n = item
        t = now - st.last_fetch[n]
        s = now - st.last_request[n]
        st.last_request[n] = now
        fetch = t >= st.timers[n]
        if fetch:
            reading = age_reader()
            st.last_fetch[n] = now
            if self.lambda_estimator == "version_delta":
                delta = reading.backend_version
                sample = (delta - st.last_age[n]) / t if t > 0 else 0.0
            elif self.lambda_estimator == "aov_verbatim":
                delta = reading.age
                sample = (delta - st.last_age[n]) / t if t > 0 else 0.0
            else:
                delta = reading.age
                sample = delta / t if t > 0 else 0.0
            # aov_verbatim can produce negative samples; the rate estimate stays >= 0
            st.lam_hat[n] = max(0.0, (1.0 - theta) * st.lam_hat[n] + theta * sample)
            st.last_age[n] = delta
            st.timers[n] = swift_timer(
                st.eit[n], st.lam_hat[n], self.sizes_[n], self.fetch_cost,
                self.aging_cost, st.alpha, self.tau_max,
            )
        st.occupancy_obs = occupancy()
        st.eit[n] = (1.0 - theta) * st.eit[n] + theta * s
        self._track_max_eit(n)
        st.occupancy_avg = (1.0 - theta) * st.occupancy_avg + theta * st.occupancy_obs
        if st.max_eit > 0.0 and math.isfinite(self.budget_):
            st.alpha = max(0.0, (st.occupancy_avg - self.budget_) / st.max_eit)
        else:
            st.alpha = 0.0
        return fetch, st.timers[n]

    def _track_max_eit(self, n):
        st = self.state_
        e = st.eit[n]
        if e >= st.max_eit:
            st.max_eit, st.max_eit_item = e, n
        elif n == st.max_eit_item:
            st.max_eit_item = max(range(len(st.eit)), key=st.eit.__getitem__)
            st.max_eit = st.eit[st.max_eit_item]

    def current_timer(self, item):
        check_is_fitted(self, "state_")
        return self.state_.timers[item]

    @property
    def timers_(self):
        check_is_fitted(self, "state_")
        return np.asarray(self.state_.timers)

    def fit(self, requests, y=None, *, sizes=None, occupancy=None):
        """Learn from a request log of ``(item, time, backend_version)`` rows.

        Without an occupancy trace the observed occupancy is reconstructed
        from the policy's own timers. Returns ``self`` with ``state_`` set.
        """
        rows = np.asarray(requests, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 3:
            raise InvalidArgumentError("requests must have rows (item, time, backend_version)")
        if sizes is None:
            sizes = np.ones(int(rows[:, 0].max()) + 1)
        self.reset(sizes)
        cached_version = {}
        expiry = {}
        for item, now, version in rows:
            n = int(item)
            version = int(version)

            def occ(now=now):
                return sum(self.sizes_[k] for k, e in expiry.items() if e > now)

            def reader(n=n, version=version):
                return VersionReading(version, version - cached_version.get(n, version))

            fetch, tau = self.on_request(n, now, 0.0, occupancy or occ, reader)
            if fetch:
                cached_version[n] = version
                expiry[n] = now + tau
        return self

    def predict(self, X):
        """Fetch decisions for rows ``(item, elapsed_since_last_fetch)`` under the current timers."""
        check_is_fitted(self, "state_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        items = X[:, 0].astype(int)
        return (X[:, 1] >= self.timers_[items]).astype(int)
