import csv
import math

import numpy as np
import pytest
from sklearn.base import clone

from freshcache.domain import DemandSpec, ItemCatalog, ScenarioConfig
from freshcache.engine import (
    EVENT_LOG_HEADER,
    Simulation,
    config_hash,
    run,
    run_replications,
    write_event_log,
)
from freshcache.exceptions import ConfigurationError, InvalidArgumentError
from freshcache.optimal_policy import FixedTimerPolicy, OptimalTimerPolicy, analytic_cost
from freshcache.qlearning import QLearningCache
from freshcache.stochastic import RequestStream
from freshcache.swiftcache import SwiftCache


def single_config(T, seed=0):
    cat = ItemCatalog(np.array([1.0]), np.array([1.0]), np.array([20.0]))
    return ScenarioConfig(cat, DemandSpec(0.005), horizon_seconds=T, seed=seed)


def test_no_demand_costs_nothing():
    cfg = ScenarioConfig(ItemCatalog.uniform(3, 1.0, 5.0), DemandSpec(0.0), horizon_seconds=100.0)
    rep = run(cfg, OptimalTimerPolicy.from_scenario(cfg))
    assert rep.total_cost == 0.0 and rep.occupancy_time_average == 0.0 and rep.request_count == 0


def test_single_item_long_run_matches_closed_forms():
    cfg = single_config(1e7, seed=1)
    pol = OptimalTimerPolicy.from_scenario(cfg).fit(cfg.catalog)
    rep = run(cfg, pol)
    assert rep.avg_cost_rate == pytest.approx(pol.cost_, rel=0.02)
    assert rep.avg_cost_rate == pytest.approx(0.00499, rel=0.02)
    assert rep.occupancy_time_average == pytest.approx(pol.occupancy_, rel=0.02)


def test_replications_agree_with_closed_form():
    cfg = single_config(1e6)
    pol = OptimalTimerPolicy.from_scenario(cfg)
    reports, summary = run_replications(cfg, pol, 20)
    expected = pol.fit(cfg.catalog).cost_
    assert abs(summary.mean - expected) < 3 * summary.stderr
    assert len({r.seed for r in reports}) == 20


def test_single_replication_summary():
    reports, summary = run_replications(single_config(1e5), OptimalTimerPolicy(beta=0.005), 1)
    assert summary.mean == reports[0].avg_cost_rate and summary.stderr == 0.0


def test_runs_are_reproducible(small_zipf_config):
    pol = SwiftCache.from_scenario(small_zipf_config)
    a = run(small_zipf_config, clone(pol))
    b = run(small_zipf_config, clone(pol))
    assert a.to_json() == b.to_json()
    assert a.config_hash == config_hash(small_zipf_config)
    c = run(small_zipf_config.replace(seed=99), clone(pol))
    assert c.total_cost != a.total_cost


def test_event_log_accounts_for_every_charge(small_zipf_config, tmp_path):
    rep = run(small_zipf_config, SwiftCache.from_scenario(small_zipf_config), event_log=True)
    log = rep.event_log
    assert math.fsum(e[5] for e in log) == pytest.approx(rep.total_cost, rel=1e-12)
    assert math.fsum(e[5] for e in log if e[2] == "fetch") == pytest.approx(rep.fetch_cost, rel=1e-12)
    assert rep.total_cost == rep.fetch_cost + rep.aging_cost
    assert all(e[3] == 0 for e in log if e[2] == "fetch")
    path = tmp_path / "log.csv"
    write_event_log(rep, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == EVENT_LOG_HEADER and len(rows) == len(log) + 1


def test_served_age_is_version_difference(small_zipf_config):
    cfg = small_zipf_config
    rep = run(cfg, SwiftCache.from_scenario(cfg), event_log=True)
    # replay each item's request stream independently of the engine
    rates = cfg.item_rates
    replay = {i: RequestStream(cfg.seed, i, rates[i], 1.0, cfg.catalog.refresh_rates[i])
              for i in range(cfg.catalog.n_items)}
    cached = {}
    for t, i, kind, age, action, charge in rep.event_log:
        rt, version = replay[i].next()
        assert rt == t
        if kind == "fetch":
            cached[i] = version
        else:
            assert age == version - cached[i]
            assert charge == pytest.approx(cfg.costs.aging_unit_cost * age)


def test_occupancy_independent_of_sampling(small_zipf_config):
    pol = SwiftCache.from_scenario(small_zipf_config)
    a = run(small_zipf_config, clone(pol))
    b = run(small_zipf_config.replace(sample_every=37.0), clone(pol))
    assert a.occupancy_time_average == b.occupancy_time_average
    assert a.total_cost == b.total_cost
    assert len(b.samples) == int(small_zipf_config.horizon_seconds // 37.0)
    assert 0 <= b.occupancy_time_average <= float(np.sum(small_zipf_config.catalog.sizes))


def test_error_shrinks_with_horizon():
    def mean_error(T, seeds):
        errs = []
        for s in range(seeds):
            cfg = single_config(T, seed=s)
            pol = OptimalTimerPolicy.from_scenario(cfg).fit(cfg.catalog)
            errs.append(abs(run(cfg, pol).avg_cost_rate - pol.cost_) / pol.cost_)
        return np.mean(errs)

    assert mean_error(1e7, 4) < mean_error(1e5, 4)


def test_fixed_timer_zero_fetches_on_every_request(small_zipf_config):
    pol = FixedTimerPolicy(np.zeros(small_zipf_config.catalog.n_items))
    rep = run(small_zipf_config, pol)
    assert rep.fetch_count == rep.request_count and rep.aging_cost == 0.0
    assert rep.occupancy_time_average == 0.0


def test_never_evict_fills_the_cache():
    cat = ItemCatalog(np.array([2.0, 3.0]), np.array([0.5, 0.5]), np.array([0.0, 0.0]))
    cfg = ScenarioConfig(cat, DemandSpec(1.0), horizon_seconds=1e4, seed=0)
    rep = run(cfg, FixedTimerPolicy([math.inf, math.inf]))
    assert rep.fetch_count == 2 and rep.aging_cost == 0.0
    assert rep.occupancy_time_average == pytest.approx(5.0, rel=1e-3)


def test_fixed_timer_long_run_cost_with_static_item():
    cat = ItemCatalog(np.array([1.0, 1.0]), np.array([0.5, 0.5]), np.array([0.0, 10.0]))
    cfg = ScenarioConfig(cat, DemandSpec(2.0), horizon_seconds=2e5, seed=4)
    pol = OptimalTimerPolicy.from_scenario(cfg).fit(cat)
    rep = run(cfg, pol)
    assert rep.avg_cost_rate == pytest.approx(analytic_cost(pol.timers_, cat, 2.0, 1.0, 0.1), rel=0.03)


def test_bad_horizon_and_shift_time(small_zipf_config):
    with pytest.raises(ConfigurationError) as err:
        run(small_zipf_config.replace(horizon_seconds=0.0), SwiftCache())
    assert err.value.key == "horizon_seconds"
    sim = Simulation(small_zipf_config, SwiftCache.from_scenario(small_zipf_config))
    sim.advance(100.0)
    with pytest.raises(InvalidArgumentError):
        sim.shift(small_zipf_config.catalog, 50.0)
    with pytest.raises(InvalidArgumentError):
        sim.shift(ItemCatalog.uniform(3), 200.0)


def test_qlearning_has_no_event_log(small_zipf_config):
    with pytest.raises(ConfigurationError):
        run(small_zipf_config, QLearningCache(), event_log=True)
