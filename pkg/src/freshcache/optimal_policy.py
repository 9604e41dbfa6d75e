"""Closed-form optimal eviction timers under Poisson requests.

The per-item holding time that minimises the long-run average cost

    tau_n = [sqrt(1 + 2 b_n (beta p_n c_f - alpha) / (c_a lambda_n)) - 1]^+ / (beta p_n)

depends on one scalar multiplier ``alpha`` which prices cache occupancy. With
an unlimited cache ``alpha = 0``; otherwise it is the root of
``B(tau(alpha)) = budget`` and is found by bisection because the occupancy is
non-increasing in ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InfeasibleBudgetError, InvalidArgumentError
from .validation import check_budget, check_positive, check_vector

# stop once alpha * (budget - B) is this small (complementary slackness residual)
SLACKNESS_TOL = 1e-12


def _sqrt1pm1(x):
    # sqrt(1+x) - 1 without cancellation for small x
    return x / (np.sqrt(1.0 + x) + 1.0)


def compute_timer(sizes, popularity, refresh_rates, beta, fetch_cost, aging_cost, alpha=0.0):
    """Optimal holding time for each item at occupancy price ``alpha``.

    Items that never change (``refresh_rates == 0``) get ``inf`` (never evict)
    unless ``alpha`` prices them out, in which case the timer is 0.
    Scalar inputs give a scalar result.
    """
    scalar = np.ndim(sizes) == 0 and np.ndim(popularity) == 0 and np.ndim(refresh_rates) == 0
    b = np.asarray(sizes, dtype=float)
    lam = np.asarray(refresh_rates, dtype=float)
    rate = float(beta) * np.asarray(popularity, dtype=float)
    b, lam, rate = np.broadcast_arrays(b, lam, rate)
    if (rate <= 0).any() or not np.isfinite(rate).all():
        raise InvalidArgumentError("beta * popularity must be > 0 for every item")
    if (b <= 0).any() or (lam < 0).any():
        raise InvalidArgumentError("sizes must be > 0 and refresh rates >= 0")
    check_positive(aging_cost, "aging_cost")
    check_positive(fetch_cost, "fetch_cost", allow_zero=True)
    check_positive(alpha, "alpha", allow_zero=True)

    margin = rate * fetch_cost - alpha
    tau = np.zeros(b.shape)
    static = lam == 0
    tau[static & (margin > 0)] = np.inf
    dyn = ~static & (margin > 0)
    x = 2.0 * b[dyn] * margin[dyn] / (aging_cost * lam[dyn])
    tau[dyn] = _sqrt1pm1(x) / rate[dyn]
    return float(tau) if scalar else tau


def analytic_cost(timers, catalog, beta, fetch_cost, aging_cost):
    """Long-run average cost per second of a fixed-timer policy under Poisson requests."""
    tau = check_vector(timers, "timers", catalog.n_items, allow_zero=True, allow_inf=True)
    p = catalog.popularity
    lam = catalog.refresh_rates
    b = catalog.sizes
    x = beta * p * tau
    finite = np.isfinite(tau)
    terms = np.zeros_like(tau)
    f = finite
    terms[f] = p[f] * (0.5 * aging_cost * lam[f] * p[f] * beta * tau[f] ** 2 + b[f] * fetch_cost) / (1.0 + x[f])
    # never-evicted items: aging grows without bound unless the item is static
    terms[~finite & (lam > 0)] = np.inf
    return float(beta * math.fsum(terms)) if np.isfinite(terms).all() else math.inf


def analytic_occupancy(timers, catalog, beta):
    """Time-average size-weighted occupancy ``sum_n b_n x_n / (1 + x_n)``, ``x_n = beta p_n tau_n``."""
    tau = check_vector(timers, "timers", catalog.n_items, allow_zero=True, allow_inf=True)
    x = beta * catalog.popularity * tau
    frac = np.where(np.isinf(x), 1.0, x / (1.0 + np.where(np.isinf(x), 0.0, x)))
    return float(math.fsum(catalog.sizes * frac))


def optimal_cost_unlimited(catalog, beta, fetch_cost, aging_cost):
    """Optimal average cost with an unlimited cache.

    Each dynamic item contributes ``c_a lambda_n (sqrt(1 + 2 b_n beta p_n c_f / (lambda_n c_a)) - 1)``;
    static items contribute nothing in the long run.
    """
    lam = catalog.refresh_rates
    rate = beta * catalog.popularity
    num = 2.0 * catalog.sizes * rate * fetch_cost
    out = np.zeros(catalog.n_items)
    dyn = lam > 0
    x = num[dyn] / (lam[dyn] * aging_cost)
    # c_a lam (sqrt(1+x)-1) == num / (sqrt(1+x)+1)
    out[dyn] = num[dyn] / (np.sqrt(1.0 + x) + 1.0)
    return float(math.fsum(out))


@dataclass(frozen=True)
class TimerPolicy:
    timers: np.ndarray
    multiplier: float
    analytic_cost: float
    analytic_occupancy: float


def _timers_at(catalog, beta, fetch_cost, aging_cost, alpha):
    return compute_timer(catalog.sizes, catalog.popularity, catalog.refresh_rates,
                         beta, fetch_cost, aging_cost, alpha)


def solve_alpha(catalog, beta, fetch_cost, aging_cost, budget=None, *, max_iter=400):
    """Timers and multiplier meeting the occupancy budget with complementary slackness.

    Returns ``alpha = 0`` when the unconstrained timers already fit; otherwise
    bisects on ``alpha in (0, max_n beta p_n c_f]`` until the slackness residual
    ``alpha (budget - B)`` is below :data:`SLACKNESS_TOL` or the bracket collapses. The returned
    timers always satisfy the budget.
    """
    budget = check_budget(budget)
    check_positive(beta, "beta", allow_zero=True)
    if beta == 0:
        tau = np.zeros(catalog.n_items)
        return TimerPolicy(tau, 0.0, 0.0, 0.0)
    if budget <= 0:
        raise InfeasibleBudgetError(f"budget must be > 0 with positive demand, got {budget}")

    def occ(alpha):
        return analytic_occupancy(_timers_at(catalog, beta, fetch_cost, aging_cost, alpha), catalog, beta)

    alpha = 0.0
    if occ(0.0) > budget:
        lo = 0.0
        hi = float(np.max(beta * catalog.popularity) * fetch_cost)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            b_mid = occ(mid)
            if b_mid > budget:
                lo = mid
            else:
                hi = mid
                if mid * (budget - b_mid) < SLACKNESS_TOL:
                    break
            if hi - lo <= 4 * np.finfo(float).eps * hi:
                break
        alpha = hi
    tau = _timers_at(catalog, beta, fetch_cost, aging_cost, alpha)
    return TimerPolicy(
        timers=tau,
        multiplier=alpha,
        analytic_cost=analytic_cost(tau, catalog, beta, fetch_cost, aging_cost),
        analytic_occupancy=analytic_occupancy(tau, catalog, beta),
    )


class TimerCacheMixin:
    """Engine hook for policies that hold each item for a fixed time ``timers_[n]``."""

    def start_run(self, catalog):
        if not hasattr(self, "timers_"):
            self.fit(catalog)
        if len(self.timers_) != catalog.n_items:
            raise InvalidArgumentError("timer vector does not match the catalog size")
        self._timer_list = [float(t) for t in self.timers_]

    def on_request(self, item, now, elapsed, occupancy, age_reader):
        tau = self._timer_list[item]
        return elapsed >= tau, tau

    def predict(self, X):
        """Fetch decisions for rows ``(item, elapsed_since_fetch)``.

        A row fetches when the item's timer has expired; ``elapsed = inf``
        encodes an item that was never cached.
        """
        check_is_fitted(self, "timers_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        items = X[:, 0].astype(int)
        return (X[:, 1] >= self.timers_[items]).astype(int)


class FixedTimerPolicy(TimerCacheMixin, BaseEstimator):
    """Holds item ``n`` for ``timers[n]`` seconds after each fetch."""

    def __init__(self, timers=None):
        self.timers = timers

    def fit(self, X=None, y=None):
        self.timers_ = check_vector(self.timers, "timers", allow_zero=True, allow_inf=True)
        return self


class OptimalTimerPolicy(TimerCacheMixin, BaseEstimator):
    """Optimal fixed timers for a known catalog, demand rate and occupancy budget.

    ``fit(catalog)`` solves for the multiplier and exposes ``timers_``,
    ``multiplier_``, ``cost_`` (analytic average cost), ``occupancy_`` and
    ``optimal_cost_`` (the unlimited-cache optimum).
    """

    def __init__(self, beta=1.0, fetch_cost=1.0, aging_cost=0.1, budget=None):
        self.beta = beta
        self.fetch_cost = fetch_cost
        self.aging_cost = aging_cost
        self.budget = budget

    @classmethod
    def from_scenario(cls, config):
        return cls(
            beta=config.demand.beta,
            fetch_cost=config.costs.fetch_unit_cost,
            aging_cost=config.costs.aging_unit_cost,
            budget=config.capacity.budget,
        )

    def fit(self, catalog, y=None):
        sol = solve_alpha(catalog, self.beta, self.fetch_cost, self.aging_cost, self.budget)
        self.timers_ = sol.timers
        self.multiplier_ = sol.multiplier
        self.cost_ = sol.analytic_cost
        self.occupancy_ = sol.analytic_occupancy
        self.optimal_cost_ = optimal_cost_unlimited(catalog, self.beta, self.fetch_cost, self.aging_cost)
        return self
