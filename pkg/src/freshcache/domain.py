"""Static problem description: catalog, demand, costs, capacity and run settings.

Every policy and the simulation engine read their parameters from a
:class:`ScenarioConfig`. Instances are immutable once built; the vectors in
:class:`ItemCatalog` are stored as read-only numpy arrays so a config can be
shared between concurrent runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidArgumentError

ARRIVAL_LAWS = ("poisson", "gamma")
POPULARITY_SUM_TOL = 1e-9


def _frozen_array(values):
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


def build_zipf_popularity(n_items, exponent=1.0):
    """Zipf popularity ``p_n ∝ n**-exponent`` for ``n = 1..n_items``, normalised to 1."""
    if int(n_items) != n_items or n_items < 1:
        raise InvalidArgumentError(f"n_items must be a positive integer, got {n_items}")
    if exponent < 0:
        raise InvalidArgumentError(f"exponent must be >= 0, got {exponent}")
    ranks = np.arange(1, int(n_items) + 1, dtype=float)
    weights = ranks ** (-float(exponent))
    return weights / math.fsum(weights)


@dataclass(frozen=True)
class ItemCatalog:
    """Sizes ``b_n``, request popularity ``p_n`` and refresh rates ``λ_n``."""

    sizes: np.ndarray
    popularity: np.ndarray
    refresh_rates: np.ndarray

    def __post_init__(self):
        for name in ("sizes", "popularity", "refresh_rates"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def n_items(self):
        return int(self.popularity.shape[0])

    @classmethod
    def uniform(cls, n_items, size=1.0, refresh_rate=1.0):
        n = int(n_items)
        return cls(np.full(n, float(size)), np.full(n, 1.0 / n), np.full(n, float(refresh_rate)))

    @classmethod
    def zipf(cls, n_items, exponent=1.0, size=1.0, refresh_rate=1.0):
        n = int(n_items)
        return cls(
            np.broadcast_to(np.asarray(size, dtype=float), (n,)),
            build_zipf_popularity(n, exponent),
            np.broadcast_to(np.asarray(refresh_rate, dtype=float), (n,)),
        )

    def replace(self, **changes):
        return replace(self, **changes)

    def is_symmetric(self):
        """True when every item has the same size, popularity and refresh rate."""
        return bool(
            np.ptp(self.sizes) == 0
            and np.ptp(self.refresh_rates) == 0
            and np.allclose(self.popularity, self.popularity[0], rtol=1e-12, atol=0)
        )


@dataclass(frozen=True)
class DemandSpec:
    """Aggregate request rate and the per-item interarrival law.

    ``arrival_law="poisson"`` behaves exactly like ``"gamma"`` with ``omega=1``.
    """

    beta: float
    arrival_law: str = "poisson"
    omega: float = 1.0

    @property
    def shape(self):
        return 1.0 if self.arrival_law == "poisson" else float(self.omega)


@dataclass(frozen=True)
class CostParams:
    fetch_unit_cost: float = 1.0
    aging_unit_cost: float = 0.1


@dataclass(frozen=True)
class CapacityConstraint:
    """Bound on the time-average size-weighted occupancy; ``inf`` means unlimited."""

    budget: float = math.inf

    @property
    def unlimited(self):
        return math.isinf(self.budget)


@dataclass(frozen=True)
class QConfig:
    """Hyper-parameters of the tabular Q-learning baseline."""

    time_step: float = 0.1
    learning_rate: float = 0.1
    discount: float = 0.99
    epsilon_initial: float = 0.2
    epsilon_floor: float = 0.01
    # fraction of train_horizon over which epsilon decays to its floor
    epsilon_decay_frac: float = 0.5
    max_age_steps: int = 600
    train_horizon: float = 0.0
    share_table: bool | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    catalog: ItemCatalog
    demand: DemandSpec
    costs: CostParams = field(default_factory=CostParams)
    capacity: CapacityConstraint = field(default_factory=CapacityConstraint)
    horizon_seconds: float = 1e5
    seed: int = 0
    swiftcache_theta: float = 0.005
    qlearning: QConfig = field(default_factory=QConfig)
    warmup_frac: float = 0.1
    sample_every: float = 0.0

    def replace(self, **changes):
        return replace(self, **changes)

    @property
    def item_rates(self):
        """Per-item request rates ``β p_n``."""
        return self.demand.beta * self.catalog.popularity


class Violation(NamedTuple):
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


def _finite(x):
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def validate(config):
    """List every violated invariant of ``config``; an empty list means ok.

    Violations are returned as data, never raised.
    """
    out = []
    cat = config.catalog
    n = cat.n_items
    if n < 1:
        out.append(Violation("catalog.n_items", "positive integer"))
    for name in ("sizes", "refresh_rates"):
        if getattr(cat, name).shape[0] != n:
            out.append(Violation(f"catalog.{name}", f"length must equal n_items={n}"))
    if n >= 1:
        p = cat.popularity
        if np.isnan(p).any() or abs(math.fsum(p) - 1.0) > POPULARITY_SUM_TOL:
            out.append(Violation("catalog.popularity", "popularity sum must equal 1"))
        if (p <= 0).any():
            out.append(Violation("catalog.popularity", "popularity positive"))
    if cat.sizes.size and not (np.isfinite(cat.sizes).all() and (cat.sizes > 0).all()):
        out.append(Violation("catalog.sizes", "sizes positive"))
    lam = cat.refresh_rates
    if lam.size and (np.isnan(lam).any() or (lam < 0).any()):
        out.append(Violation("catalog.refresh_rates", "refresh_rates nonnegative"))
    if lam.size and np.isinf(lam).any():
        out.append(Violation("catalog.refresh_rates", "refresh_rates finite"))

    d = config.demand
    if not _finite(d.beta) or d.beta < 0:
        out.append(Violation("demand.beta", "beta nonnegative"))
    if d.arrival_law not in ARRIVAL_LAWS:
        out.append(Violation("demand.arrival_law", f"one of {ARRIVAL_LAWS}"))
    elif d.arrival_law == "gamma" and not (_finite(d.omega) and d.omega > 0):
        out.append(Violation("demand.omega", "omega positive"))

    c = config.costs
    if not (_finite(c.fetch_unit_cost) and c.fetch_unit_cost > 0):
        out.append(Violation("costs.fetch_unit_cost", "fetch cost positive"))
    if not (_finite(c.aging_unit_cost) and c.aging_unit_cost > 0):
        out.append(Violation("costs.aging_unit_cost", "aging cost positive"))

    b = config.capacity.budget
    if math.isnan(b) or (not math.isinf(b) and b <= 0) or b == -math.inf:
        out.append(Violation("capacity.budget", "budget positive or unlimited"))

    if not (_finite(config.horizon_seconds) and config.horizon_seconds > 0):
        out.append(Violation("horizon_seconds", "horizon positive"))
    if not (0.0 < config.swiftcache_theta <= 1.0):
        out.append(Violation("swiftcache.theta", "theta in (0, 1]"))
    if not (0.0 <= config.warmup_frac < 1.0):
        out.append(Violation("warmup_frac", "warmup fraction in [0, 1)"))
    if not (_finite(config.sample_every) and config.sample_every >= 0):
        out.append(Violation("sample_every", "sample cadence nonnegative"))
    if int(config.seed) != config.seed or not (0 <= config.seed < 2**64):
        out.append(Violation("seed", "64-bit nonnegative integer"))

    q = config.qlearning
    if not (_finite(q.time_step) and q.time_step > 0):
        out.append(Violation("qlearning.time_step", "time step positive"))
    if not (0.0 < q.learning_rate <= 1.0):
        out.append(Violation("qlearning.learning_rate", "learning rate in (0, 1]"))
    if not (0.0 < q.discount < 1.0):
        out.append(Violation("qlearning.discount", "discount in (0, 1)"))
    if not (0.0 <= q.epsilon_floor <= q.epsilon_initial <= 1.0):
        out.append(Violation("qlearning.epsilon", "0 <= floor <= initial <= 1"))
    if int(q.max_age_steps) != q.max_age_steps or q.max_age_steps < 2:
        out.append(Violation("qlearning.max_age_steps", "integer >= 2"))
    if not (_finite(q.train_horizon) and q.train_horizon >= 0):
        out.append(Violation("qlearning.train_horizon", "train horizon nonnegative"))
    return out
