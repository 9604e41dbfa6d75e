"""Discrete-event simulation of a single timer-based edge cache.

Requests for each item arrive on independent renewal streams. At every
request the policy decides between serving the cached copy (charged
``c_a * age`` where age counts backend updates since the copy was fetched) and
fetching a fresh copy (charged ``b_n * c_f``; the request is then served at
age 0). Eviction is lazy: an item whose timer has expired simply counts as
absent. Occupancy is integrated exactly from fetch/expiry times.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import clone

from .domain import validate
from .exceptions import ConfigurationError, InvalidArgumentError
from .stochastic import RequestStream, make_stream
from .swiftcache import VersionReading

EVENT_LOG_HEADER = ("time", "item", "kind", "age", "action", "charge")


@dataclass
class CacheEntry:
    cached: bool = False
    cached_version: int = 0
    fetch_time: float = 0.0
    expiry_time: float = 0.0


@dataclass
class SimulationReport:
    policy: str
    seed: int
    config_hash: str
    duration: float
    total_cost: float
    fetch_cost: float
    aging_cost: float
    avg_cost_rate: float
    request_count: int
    fetch_count: int
    requests_per_item: list
    fetches_per_item: list
    occupancy_time_average: float
    window_start: float
    window_cost: float
    window_cost_rate: float
    window_occupancy: float
    samples: list = field(default_factory=list)
    event_log: list | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_log=False):
        d = asdict(self)
        if not include_log:
            d.pop("event_log")
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def config_hash(config):
    """Stable short hash of every field of a scenario."""

    def default(o):
        if isinstance(o, np.ndarray):
            return [repr(float(v)) for v in o]
        raise TypeError(type(o))

    blob = json.dumps(asdict(config), sort_keys=True, default=default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def check_config(config):
    problems = validate(config)
    if problems:
        first = problems[0]
        raise ConfigurationError(
            "invalid scenario: " + "; ".join(str(p) for p in problems), key=first.path
        )


def _overlap(a, b, lo, hi):
    return max(0.0, min(b, hi) - max(a, lo))


class Simulation:
    """Event loop state for one run. Use :func:`run` unless you need phases."""

    def __init__(self, config, policy, *, event_log=False):
        check_config(config)
        self.config = config
        self.policy = policy
        self.catalog = config.catalog
        n = self.catalog.n_items
        self.sizes = [float(b) for b in self.catalog.sizes]
        self.fetch_cost = config.costs.fetch_unit_cost
        self.aging_cost = config.costs.aging_unit_cost
        self.horizon = float(config.horizon_seconds)
        self.window_start = config.warmup_frac * self.horizon
        self.now = 0.0
        self.phase = 0

        self.cached = [False] * n
        self.cached_version = [0] * n
        self.fetch_time = [0.0] * n
        self.expiry = [0.0] * n
        self.epoch = [0] * n
        self.last_req_time = [0.0] * n
        self.last_req_version = [0] * n
        self.occupancy = 0.0
        self._expiry_heap = []
        self._events = []

        self.requests = [0] * n
        self.fetches = [0] * n
        self.fetch_total = 0.0
        self.aging_total = 0.0
        self.window_fetch = 0.0
        self.window_aging = 0.0
        self.occ_integral = 0.0
        self.occ_window_integral = 0.0
        self.samples = []
        self.sample_every = float(config.sample_every)
        self._next_sample = self.sample_every if self.sample_every > 0 else math.inf
        self.log = [] if event_log else None

        policy.start_run(self.catalog)
        self._open_streams(self.catalog, start=0.0, versions=[0] * n)

    # -- streams -----------------------------------------------------------
    def _open_streams(self, catalog, start, versions):
        shape = self.config.demand.shape
        rates = self.config.demand.beta * catalog.popularity
        self.streams = [
            RequestStream(self.config.seed, i, rates[i], shape, catalog.refresh_rates[i],
                          start_time=start, start_version=versions[i], phase=self.phase)
            for i in range(catalog.n_items)
        ]
        self._events = []
        for i, s in enumerate(self.streams):
            t, v = s.next()
            if t < math.inf:
                self._events.append((t, i, v))
        heapq.heapify(self._events)

    def shift(self, catalog, at):
        """Replace popularity/refresh rates from time ``at`` on; cache and policy state carry over."""
        if not (self.now <= at < self.horizon):
            raise InvalidArgumentError(f"shift time {at} must lie in [{self.now}, {self.horizon})")
        if catalog.n_items != self.catalog.n_items:
            raise InvalidArgumentError("shifted catalog must keep the number of items")
        self.advance(at)
        old_lam = self.catalog.refresh_rates
        versions = []
        for i in range(catalog.n_items):
            gap = at - self.last_req_time[i]
            rng = make_stream(self.config.seed, i, "shift", self.phase)
            inc = rng.poisson(old_lam[i] * gap) if old_lam[i] > 0 and gap > 0 else 0
            versions.append(self.last_req_version[i] + int(inc))
            self.last_req_time[i] = at
            self.last_req_version[i] = versions[-1]
        self.phase += 1
        self.catalog = catalog
        self.sizes = [float(b) for b in catalog.sizes]
        self._open_streams(catalog, start=at, versions=versions)

    # -- occupancy ---------------------------------------------------------
    def _expire(self, t):
        heap = self._expiry_heap
        while heap and heap[0][0] <= t:
            _, i, ep = heapq.heappop(heap)
            if ep == self.epoch[i]:
                self.occupancy -= self.sizes[i]
                self.epoch[i] += 1

    def _close_period(self, i, end):
        a = self.fetch_time[i]
        b = min(self.expiry[i], end)
        if b > a:
            self.occ_integral += self.sizes[i] * (b - a)
            self.occ_window_integral += self.sizes[i] * _overlap(a, b, self.window_start, self.horizon)

    def current_occupancy(self):
        return self.occupancy

    # -- main loop ---------------------------------------------------------
    def advance(self, until):
        until = min(until, self.horizon)
        events = self._events
        heappop, heappush = heapq.heappop, heapq.heappush
        policy = self.policy
        sizes = self.sizes
        c_f, c_a = self.fetch_cost, self.aging_cost
        w0 = self.window_start
        occupancy_fn = self.current_occupancy
        log = self.log
        while events and events[0][0] < until:
            now, i, version = heappop(events)
            self.now = now
            while self._next_sample <= now:
                ts = self._next_sample
                self._expire(ts)
                cost = self.fetch_total + self.aging_total
                self.samples.append((ts, cost / ts, self.occupancy))
                self._next_sample += self.sample_every
            if self._expiry_heap and self._expiry_heap[0][0] <= now:
                self._expire(now)

            self.requests[i] += 1
            cached = self.cached[i]
            elapsed = now - self.fetch_time[i] if cached else math.inf
            cver = self.cached_version[i]

            def reader(version=version, cached=cached, cver=cver):
                return VersionReading(version, version - cver if cached else 0)

            fetch, tau = policy.on_request(i, now, elapsed, occupancy_fn, reader)
            if not cached:
                fetch = True
            if fetch:
                charge = sizes[i] * c_f
                self.fetch_total += charge
                if now >= w0:
                    self.window_fetch += charge
                self.fetches[i] += 1
                if cached:
                    self._close_period(i, now)
                    if self.expiry[i] > now:
                        self.occupancy -= sizes[i]
                self.epoch[i] += 1
                self.cached[i] = True
                self.cached_version[i] = version
                self.fetch_time[i] = now
                expiry = now + tau
                self.expiry[i] = expiry
                if expiry > now:
                    self.occupancy += sizes[i]
                    if expiry < math.inf:
                        heappush(self._expiry_heap, (expiry, i, self.epoch[i]))
                age = 0
            else:
                age = version - cver
                charge = c_a * age
                self.aging_total += charge
                if now >= w0:
                    self.window_aging += charge
            if log is not None:
                log.append((now, i, "fetch" if fetch else "serve", age, int(fetch), charge))
            self.last_req_time[i] = now
            self.last_req_version[i] = version
            t_next, v_next = self.streams[i].next()
            if t_next < math.inf:
                heappush(events, (t_next, i, v_next))
        self.now = max(self.now, until)
        while self._next_sample <= until:
            ts = self._next_sample
            self._expire(ts)
            self.samples.append((ts, (self.fetch_total + self.aging_total) / ts, self.occupancy))
            self._next_sample += self.sample_every

    def report(self, policy_name=None):
        T = self.horizon
        occ = self.occ_integral
        occ_w = self.occ_window_integral
        for i in range(len(self.cached)):
            if self.cached[i]:
                a = self.fetch_time[i]
                b = min(self.expiry[i], T)
                if b > a:
                    occ += self.sizes[i] * (b - a)
                    occ_w += self.sizes[i] * _overlap(a, b, self.window_start, T)
        total = self.fetch_total + self.aging_total
        window_len = T - self.window_start
        window_cost = self.window_fetch + self.window_aging
        return SimulationReport(
            policy=policy_name or type(self.policy).__name__,
            seed=int(self.config.seed),
            config_hash=config_hash(self.config),
            duration=T,
            total_cost=total,
            fetch_cost=self.fetch_total,
            aging_cost=self.aging_total,
            avg_cost_rate=total / T,
            request_count=sum(self.requests),
            fetch_count=sum(self.fetches),
            requests_per_item=list(self.requests),
            fetches_per_item=list(self.fetches),
            occupancy_time_average=occ / T,
            window_start=self.window_start,
            window_cost=window_cost,
            window_cost_rate=window_cost / window_len,
            window_occupancy=occ_w / window_len,
            samples=list(self.samples),
            event_log=self.log,
            extra={"window_fetch_cost": self.window_fetch, "window_aging_cost": self.window_aging},
        )


def run(config, policy, *, event_log=False):
    """Simulate ``policy`` on ``config`` for ``config.horizon_seconds``.

    ``policy`` is used as-is (its learned state is updated); pass
    ``sklearn.base.clone(policy)`` to keep the original untouched. Q-learning
    policies are dispatched to their stepped simulator.
    """
    from .qlearning import QLearningCache

    if isinstance(policy, QLearningCache):
        if event_log:
            raise ConfigurationError("event logs are not recorded by the stepped Q-learning simulator")
        return policy.simulate(config)
    sim = Simulation(config, policy, event_log=event_log)
    sim.advance(config.horizon_seconds)
    return sim.report()


@dataclass
class ReplicationSummary:
    field: str
    n_runs: int
    mean: float
    stderr: float
    values: list


def summarize(reports, field="avg_cost_rate"):
    vals = [float(getattr(r, field)) for r in reports]
    n = len(vals)
    mean = math.fsum(vals) / n
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return ReplicationSummary(field, n, mean, stderr, vals)


def run_replications(config, policy, n_runs, seed_stride=1, field="avg_cost_rate"):
    """Run ``n_runs`` independent seeds (``seed + k*seed_stride``) with fresh policy clones."""
    if int(n_runs) < 1:
        raise InvalidArgumentError("n_runs must be >= 1")
    reports = []
    for k in range(int(n_runs)):
        cfg = config.replace(seed=int(config.seed) + k * int(seed_stride))
        reports.append(run(cfg, clone(policy)))
    return reports, summarize(reports, field)


def write_event_log(report, path):
    """Dump ``report.event_log`` as CSV with one row per request."""
    if report.event_log is None:
        raise ConfigurationError("report has no event log; run with event_log=True")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_LOG_HEADER)
        for row in report.event_log:
            w.writerow([repr(row[0]), row[1], row[2], row[3], row[4], repr(row[5])])
