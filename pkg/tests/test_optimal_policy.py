import math

import numpy as np
import pytest
from oracles import cost_decimal, grid_alpha, occupancy_decimal, timer_decimal
from sklearn.base import clone

from freshcache.domain import ItemCatalog
from freshcache.exceptions import InfeasibleBudgetError, InvalidArgumentError
from freshcache.optimal_policy import (
    FixedTimerPolicy,
    OptimalTimerPolicy,
    analytic_cost,
    analytic_occupancy,
    compute_timer,
    optimal_cost_unlimited,
    solve_alpha,
)

ITEM = dict(sizes=1.0, popularity=0.001, refresh_rates=20.0, beta=5.0, fetch_cost=1.0, aging_cost=0.1)


def one_item(p=0.001):
    return ItemCatalog(np.array([1.0]), np.array([1.0]), np.array([20.0])), 5.0 * p


def test_timer_single_item():
    tau = compute_timer(**ITEM)
    ref = float(timer_decimal(1, 0.001, 20, 5, 1, 0.1))
    assert tau == pytest.approx(ref, rel=1e-14)
    assert tau == pytest.approx(0.4993765, abs=1e-7)


def test_timer_zero_when_multiplier_prices_item_out():
    assert compute_timer(**ITEM, alpha=0.005) == 0.0
    assert compute_timer(**ITEM, alpha=0.01) == 0.0


def test_timer_large_refresh_rate_approaches_bound():
    tau = compute_timer(**{**ITEM, "refresh_rates": 1e6})
    bound = 1.0 * 1.0 / (0.1 * 1e6)
    assert tau < bound * (1 + 1e-9)
    assert tau == pytest.approx(bound, rel=1e-3)


def test_timer_static_item_never_evicted():
    assert compute_timer(**{**ITEM, "refresh_rates": 0.0}) == math.inf
    assert compute_timer(**{**ITEM, "refresh_rates": 0.0}, alpha=1.0) == 0.0


@pytest.mark.parametrize("bad", [dict(popularity=0.0), dict(sizes=-1.0), dict(refresh_rates=-2.0),
                                 dict(aging_cost=0.0)])
def test_timer_rejects_invalid(bad):
    with pytest.raises(InvalidArgumentError):
        compute_timer(**{**ITEM, **bad})


def test_cost_and_occupancy_single_item():
    cat, beta = one_item()
    tau = compute_timer(cat.sizes, cat.popularity, cat.refresh_rates, beta, 1.0, 0.1)
    c = analytic_cost(tau, cat, beta, 1.0, 0.1)
    ref_tau = timer_decimal(1, 1, 20, beta, 1, 0.1)
    assert c == pytest.approx(float(cost_decimal(ref_tau, 1, 1, 20, beta, 1, 0.1)), rel=1e-13)
    assert c == pytest.approx(0.00499377, abs=5e-9)
    assert c == pytest.approx(optimal_cost_unlimited(cat, beta, 1.0, 0.1), rel=1e-12)
    b = analytic_occupancy(tau, cat, beta)
    assert b == pytest.approx(float(occupancy_decimal(ref_tau, 1, 1, beta)), rel=1e-13)
    assert b == pytest.approx(0.0024907, abs=5e-8)


def test_cost_fetch_every_request():
    cat = ItemCatalog.zipf(5, 1.0, size=3.0, refresh_rate=2.0)
    c = analytic_cost(np.zeros(5), cat, 2.0, 1.5, 0.1)
    assert c == pytest.approx(2.0 * np.sum(cat.popularity * 3.0 * 1.5))
    assert analytic_occupancy(np.zeros(5), cat, 2.0) == 0.0


def test_occupancy_half_at_unit_load():
    cat = ItemCatalog(np.array([4.0]), np.array([1.0]), np.array([1.0]))
    assert analytic_occupancy([0.5], cat, 2.0) == pytest.approx(2.0)


def test_static_items_in_cost_and_occupancy():
    cat = ItemCatalog(np.array([2.0, 1.0]), np.array([0.5, 0.5]), np.array([0.0, 1.0]))
    tau = np.array([math.inf, 0.0])
    assert analytic_occupancy(tau, cat, 1.0) == pytest.approx(2.0)
    assert analytic_cost(tau, cat, 1.0, 1.0, 0.1) == pytest.approx(0.5)
    assert analytic_cost(np.array([0.0, math.inf]), cat, 1.0, 1.0, 0.1) == math.inf


def test_optimal_cost_edge_cases():
    cat = ItemCatalog.zipf(4, size=2.0, refresh_rate=3.0)
    assert optimal_cost_unlimited(cat, 0.0, 1.0, 0.1) == 0.0
    assert optimal_cost_unlimited(cat, 1.0, 0.0, 0.1) == 0.0


def test_solve_alpha_unlimited_and_loose_budgets(two_items):
    free = solve_alpha(two_items, 5.0, 1.0, 0.1, None)
    assert free.multiplier == 0.0
    np.testing.assert_array_equal(
        free.timers, compute_timer(two_items.sizes, two_items.popularity, two_items.refresh_rates, 5.0, 1.0, 0.1))
    loose = solve_alpha(two_items, 5.0, 1.0, 0.1, float(np.sum(two_items.sizes)))
    assert loose.multiplier == 0.0


def test_solve_alpha_matches_grid_oracle(two_items):
    free = solve_alpha(two_items, 5.0, 1.0, 0.1)
    budget = 0.5 * free.analytic_occupancy
    sol = solve_alpha(two_items, 5.0, 1.0, 0.1, budget)
    ref, step = grid_alpha(two_items.sizes, two_items.popularity, two_items.refresh_rates, 5.0, 1.0, 0.1, budget)
    assert abs(sol.multiplier - ref) <= 2 * step
    assert sol.analytic_occupancy <= budget
    assert sol.multiplier * (sol.analytic_occupancy - budget) == pytest.approx(0.0, abs=1e-9)


def test_solve_alpha_infeasible_and_zero_demand(two_items):
    with pytest.raises(InfeasibleBudgetError):
        solve_alpha(two_items, 5.0, 1.0, 0.1, 0.0)
    sol = solve_alpha(two_items, 0.0, 1.0, 0.1, 0.0)
    assert sol.analytic_cost == 0.0 and not sol.timers.any()


def test_optimal_timer_policy_estimator(two_items):
    est = OptimalTimerPolicy(beta=5.0, budget=0.2).fit(two_items)
    assert est.get_params()["budget"] == 0.2
    assert est.occupancy_ <= 0.2 and est.multiplier_ > 0
    assert est.cost_ >= est.optimal_cost_
    pred = est.predict([[0, 0.0], [0, est.timers_[0] + 1e-9], [1, math.inf]])
    np.testing.assert_array_equal(pred, [0, 1, 1])
    again = clone(est)
    assert not hasattr(again, "timers_")


def test_fixed_timer_policy_survives_clone():
    est = clone(FixedTimerPolicy([1.0, 2.0]))
    est.start_run(ItemCatalog.uniform(2))
    assert est.on_request(1, 5.0, 1.5, None, None) == (False, 2.0)
    with pytest.raises(InvalidArgumentError):
        est.start_run(ItemCatalog.uniform(3))
