"""Freshness-aware timer caching.

Closed-form optimal timers, the SwiftCache online policy, a tabular Q-learning
baseline, a per-item MDP oracle and a seeded discrete-event simulator.
"""

from .domain import (
    CapacityConstraint,
    CostParams,
    DemandSpec,
    ItemCatalog,
    QConfig,
    ScenarioConfig,
    build_zipf_popularity,
    validate,
)
from .engine import SimulationReport, run, run_replications
from .exceptions import (
    ConfigurationError,
    InfeasibleBudgetError,
    InvalidArgumentError,
    IterationLimitError,
)
from .metrics import pct_increase_mf_vs_mb, pct_increase_mf_vs_optimal, pct_increase_vs_optimal
from .optimal_policy import (
    FixedTimerPolicy,
    OptimalTimerPolicy,
    analytic_cost,
    analytic_occupancy,
    compute_timer,
    optimal_cost_unlimited,
    solve_alpha,
)
from .qlearning import QLearningCache, QTable
from .swiftcache import SwiftCache

__version__ = "0.1.0"

__all__ = [
    "CapacityConstraint", "ConfigurationError", "CostParams", "DemandSpec", "FixedTimerPolicy",
    "InfeasibleBudgetError", "InvalidArgumentError", "ItemCatalog", "IterationLimitError",
    "OptimalTimerPolicy", "QConfig", "QLearningCache", "QTable", "ScenarioConfig",
    "SimulationReport", "SwiftCache", "analytic_cost", "analytic_occupancy",
    "build_zipf_popularity", "compute_timer", "optimal_cost_unlimited", "pct_increase_mf_vs_mb",
    "pct_increase_mf_vs_optimal", "pct_increase_vs_optimal", "run", "run_replications",
    "solve_alpha", "validate",
]
