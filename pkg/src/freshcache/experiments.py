"""Policy factory, seeded evaluations, parameter sweeps and the popularity-shift experiment."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import CapacityConstraint, DemandSpec
from .engine import Simulation, SimulationReport, check_config, run, summarize
from .exceptions import ConfigurationError, InvalidArgumentError
from .metrics import pct_increase_mf_vs_mb, pct_increase_mf_vs_optimal, pct_increase_vs_optimal
from .optimal_policy import OptimalTimerPolicy, solve_alpha
from .qlearning import QLearningCache, QTable
from .swiftcache import SwiftCache

POLICIES = ("timer", "swiftcache", "qlearning")
SWEEP_PARAMS = ("omega", "budget", "theta")


def make_policy(name, config, swiftcache=None, qtable=None):
    """Build a fresh policy estimator for ``config``."""
    if name == "timer":
        return OptimalTimerPolicy.from_scenario(config)
    if name == "swiftcache":
        return SwiftCache.from_scenario(config, **(swiftcache or {}))
    if name == "qlearning":
        policy = QLearningCache.from_scenario(config)
        if qtable is not None:
            policy.q_table_ = qtable if isinstance(qtable, QTable) else QTable.load(qtable)
        return policy
    raise ConfigurationError(f"unknown policy {name!r}; expected one of {POLICIES}", key="policy")


def analytic_reference(config):
    """Analytic optimum for the config's budget: ``(cost, occupancy)`` of the optimal timers."""
    sol = solve_alpha(config.catalog, config.demand.beta, config.costs.fetch_unit_cost,
                      config.costs.aging_unit_cost, config.capacity.budget)
    return sol.analytic_cost, sol.analytic_occupancy


def measured_rate(report):
    """Cost rate over the measurement window (everything after warm-up)."""
    return report.window_cost_rate


def _run_one(task):
    config, name, swift, qtable = task
    return run(config, make_policy(name, config, swift, qtable))


def run_seeds(config, policy_name, runs, *, swiftcache=None, qtable=None, jobs=1):
    """Reports for seeds ``config.seed .. config.seed + runs - 1``, in seed order."""
    if runs < 1:
        raise InvalidArgumentError("runs must be >= 1")
    tasks = [(config.replace(seed=config.seed + k), policy_name, swiftcache, qtable) for k in range(runs)]
    if jobs > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def _pct_optimal(policy, c, optimal):
    if policy == "qlearning":
        return pct_increase_mf_vs_optimal(c, optimal)
    return pct_increase_vs_optimal(c, optimal)


def _summary_rows(param, policy, reports, optimal, mb_rates=None):
    rows = []
    rates = [measured_rate(r) for r in reports]
    for rep, c in zip(reports, rates):
        row = {"param": param, "policy": policy, "seed": rep.seed, "avg_cost_rate": c,
               "occupancy": rep.window_occupancy}
        if c > 0:
            row["pct_vs_optimal"] = _pct_optimal(policy, c, optimal)
        rows.append(row)
    mean = float(np.mean(rates))
    stderr = float(np.std(rates, ddof=1) / math.sqrt(len(rates))) if len(rates) > 1 else 0.0
    summary = {"param": param, "policy": policy, "seed": "", "avg_cost_rate": mean,
               "occupancy": float(np.mean([r.window_occupancy for r in reports])), "stderr": stderr}
    if mean > 0:
        summary["pct_vs_optimal"] = _pct_optimal(policy, mean, optimal)
    if mb_rates is not None:
        for row, mb in zip(rows, mb_rates):
            row["pct_mf_vs_mb"] = pct_increase_mf_vs_mb(row["avg_cost_rate"], mb)
        summary["pct_mf_vs_mb"] = pct_increase_mf_vs_mb(mean, float(np.mean(mb_rates)))
    rows.append(summary)
    return rows


def evaluate(config, policies, runs, *, param="", swiftcache=None, qtable=None, jobs=1):
    """CSV rows for each policy at one parameter point, plus an analytic ``optimal`` row.

    Q-learning rows carry ``pct_mf_vs_mb`` against SwiftCache on the same
    seeds; SwiftCache is run for that purpose even if not listed.
    """
    optimal, opt_occ = analytic_reference(config)
    rows = [{"param": param, "policy": "optimal", "seed": "", "avg_cost_rate": optimal,
             "occupancy": opt_occ}]
    reports = {}
    for name in policies:
        reports[name] = run_seeds(config, name, runs, swiftcache=swiftcache, qtable=qtable, jobs=jobs)
    if "qlearning" in reports and "swiftcache" not in reports:
        reports["swiftcache"] = run_seeds(config, "swiftcache", runs, swiftcache=swiftcache, jobs=jobs)
    mb = [measured_rate(r) for r in reports["swiftcache"]] if "swiftcache" in reports else None
    for name, reps in reports.items():
        rows.extend(_summary_rows(param, name, reps, optimal, mb if name == "qlearning" else None))
    return rows, reports


def sweep_config(config, param, value, *, base_occupancy=None):
    """``config`` with one swept parameter replaced."""
    if param == "omega":
        return config.replace(demand=DemandSpec(config.demand.beta, "gamma", float(value)))
    if param == "budget":
        if base_occupancy is None:
            base_occupancy = analytic_reference(config.replace(capacity=CapacityConstraint()))[1]
        frac = float(value)
        if not frac > 0:
            raise InvalidArgumentError("budget fractions must be > 0")
        budget = math.inf if frac >= 1 else frac * base_occupancy
        return config.replace(capacity=CapacityConstraint(budget))
    if param == "theta":
        return config.replace(swiftcache_theta=float(value))
    raise InvalidArgumentError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")


def sweep(config, param, values, policies, runs, *, swiftcache=None, qtable=None, jobs=1):
    """Rows for every value of ``param``; budget values are fractions of the unconstrained occupancy."""
    base = None
    if param == "budget":
        base = analytic_reference(config.replace(capacity=CapacityConstraint()))[1]
    rows = []
    for v in values:
        cfg = sweep_config(config, param, v, base_occupancy=base)
        r, _ = evaluate(cfg, policies, runs, param=v, swiftcache=swiftcache, qtable=qtable, jobs=jobs)
        rows.extend(r)
    return rows


# -- popularity shift -----------------------------------------------------

@dataclass(frozen=True)
class PhaseResult:
    start: float
    end: float
    cost: float
    fetch_cost: float
    aging_cost: float
    requests: int | None  # None where the stepped Q simulator does not split counts
    fetches: int | None

    @property
    def cost_rate(self):
        return self.cost / (self.end - self.start) if self.end > self.start else 0.0


@dataclass
class ShiftResult:
    report: SimulationReport
    phases: list = field(default_factory=list)
    burn_in: float = 0.0

    @property
    def phase_rates(self):
        return [p.cost_rate for p in self.phases]


def burn_in_seconds(catalog, beta, n_requests):
    """Expected time for the least-requested item to see ``n_requests`` requests."""
    rates = beta * catalog.popularity
    rates = rates[rates > 0]
    if rates.size == 0:
        return 0.0
    return float(n_requests / rates.min())


def _snapshot(sim):
    return (sim.fetch_total, sim.aging_total, sum(sim.requests), sum(sim.fetches))


def _phase(a, b, start, end):
    return PhaseResult(start, end, (b[0] - a[0]) + (b[1] - a[1]), b[0] - a[0], b[1] - a[1],
                       b[2] - a[2], b[3] - a[3])


def popularity_shift(config, policy, new_catalog, at, *, burn_in_requests=None,
                     qlearning_continue=False):
    """Run ``policy`` and swap the catalog at time ``at`` without resetting anything.

    Phases reported: ``[0, at)``, ``[at, at + burn_in)`` and ``[at + burn_in, T)``.
    ``burn_in_requests`` defaults to ``5 / theta`` requests of the least popular item.
    Q-learning runs phase 2 with the phase-1 table, frozen or still learning at
    the exploration floor; its cache restarts empty at the shift.
    """
    check_config(config)
    T = float(config.horizon_seconds)
    if not 0 < at < T:
        raise InvalidArgumentError(f"shift time must lie in (0, {T}), got {at}")
    if burn_in_requests is None:
        burn_in_requests = 5.0 / config.swiftcache_theta
    burn = min(burn_in_seconds(new_catalog, config.demand.beta, burn_in_requests), T - at)

    if isinstance(policy, QLearningCache):
        return _qlearning_shift(config, policy, new_catalog, at, burn, qlearning_continue)

    sim = Simulation(config, policy)
    s0 = _snapshot(sim)
    sim.shift(new_catalog, at)
    s1 = _snapshot(sim)
    sim.advance(at + burn)
    s2 = _snapshot(sim)
    sim.advance(T)
    s3 = _snapshot(sim)
    phases = [_phase(s0, s1, 0.0, at), _phase(s1, s2, at, at + burn), _phase(s2, s3, at + burn, T)]
    return ShiftResult(sim.report(), phases, burn)


def _qlearning_shift(config, policy, new_catalog, at, burn, keep_learning):
    cfg1 = config.replace(horizon_seconds=at, warmup_frac=0.0)
    r1 = policy.simulate(cfg1)
    q = policy.config_
    if keep_learning:
        policy.set_params(train_horizon=config.horizon_seconds - at, epsilon_initial=q.epsilon_floor)
    else:
        policy.set_params(train_horizon=0.0)
    cfg2 = config.replace(catalog=new_catalog, horizon_seconds=config.horizon_seconds - at,
                          warmup_frac=burn / (config.horizon_seconds - at))
    r2 = policy.simulate(cfg2, phase=1)
    policy.set_params(train_horizon=q.train_horizon, epsilon_initial=q.epsilon_initial)
    burn_cost = r2.total_cost - r2.window_cost
    burn_fetch = r2.fetch_cost - r2.extra["window_fetch_cost"]
    phases = [
        PhaseResult(0.0, r1.duration, r1.total_cost, r1.fetch_cost, r1.aging_cost,
                    r1.request_count, r1.fetch_count),
        PhaseResult(at, at + r2.window_start, burn_cost, burn_fetch, burn_cost - burn_fetch, None, None),
        PhaseResult(at + r2.window_start, at + r2.duration, r2.window_cost,
                    r2.extra["window_fetch_cost"], r2.extra["window_aging_cost"], None, None),
    ]
    return ShiftResult(r2, phases, burn)


def fresh_start_rate(config, policy, catalog, start):
    """Oracle for the shift test: cost rate over ``[start, T)`` of a run on ``catalog`` from time 0."""
    cfg = config.replace(catalog=catalog, warmup_frac=start / config.horizon_seconds)
    return measured_rate(run(cfg, policy))


def replication_summary(reports):
    return summarize(reports, "window_cost_rate")
