"""Flat ``dotted.key = value`` config files.

One key per line, ``#`` starts a comment. Values are numbers, words or
comma-separated number lists. Example::

    catalog.n_items = 100
    catalog.popularity = zipf
    catalog.zipf_exponent = 1.0
    catalog.size = 10
    catalog.refresh_rate = 20
    demand.beta = 1.0
    costs.fetch = 1.0
    costs.aging = 0.1
    capacity.budget = unlimited
    sim.horizon = 1e6
    sim.seed = 1
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    CapacityConstraint,
    CostParams,
    DemandSpec,
    ItemCatalog,
    QConfig,
    ScenarioConfig,
    build_zipf_popularity,
)
from .exceptions import ConfigurationError

REQUIRED_KEYS = (
    "catalog.n_items",
    "demand.beta",
    "costs.fetch",
    "costs.aging",
    "sim.horizon",
    "sim.seed",
)

KNOWN_KEYS = set(REQUIRED_KEYS) | {
    "catalog.popularity",
    "catalog.zipf_exponent",
    "catalog.size",
    "catalog.refresh_rate",
    "demand.arrival",
    "demand.omega",
    "capacity.budget",
    "capacity.budget_fraction",
    "sim.warmup_frac",
    "sim.sample_every",
    "sim.runs",
    "swiftcache.theta",
    "swiftcache.tau_max",
    "swiftcache.lambda_estimator",
    "qlearning.time_step",
    "qlearning.learning_rate",
    "qlearning.discount",
    "qlearning.epsilon_initial",
    "qlearning.epsilon_floor",
    "qlearning.epsilon_decay_frac",
    "qlearning.max_age_steps",
    "qlearning.train_horizon",
    "qlearning.share_table",
    "shift.at",
    "shift.popularity",
    "shift.refresh_rate",
    "shift.burn_in_requests",
    "shift.qlearning_continue",
    "oracle.fetch_cost",
    "oracle.aging_slope",
    "oracle.discount",
    "oracle.s_max",
}


@dataclass
class Settings:
    """A parsed config file: the scenario plus policy/experiment extras."""

    scenario: ScenarioConfig
    raw: dict
    lines: dict = field(default_factory=dict)
    swiftcache: dict = field(default_factory=dict)
    shift: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    runs: int = 1
    budget_fraction: float | None = None


def parse_text(text):
    """Return ``(values, line_numbers)`` keyed by dotted key."""
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {body!r}", line=lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key or not value:
            raise ConfigurationError(f"line {lineno}: empty key or value", key=key or None, line=lineno)
        if key not in KNOWN_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}", key=key, line=lineno)
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}", key=key, line=lineno)
        values[key] = value
        lines[key] = lineno
    return values, lines


def _num(values, key, lines, default=None, cast=float):
    if key not in values:
        if default is None:
            raise ConfigurationError(f"missing required key {key!r}", key=key)
        return default
    try:
        return cast(float(values[key])) if cast is int else cast(values[key])
    except ValueError:
        raise ConfigurationError(
            f"line {lines.get(key)}: key {key!r} expects a number, got {values[key]!r}",
            key=key, line=lines.get(key),
        ) from None


def _vector(values, key, lines, n, default):
    if key not in values:
        return np.full(n, float(default))
    try:
        parts = [float(x) for x in values[key].split(",")]
    except ValueError:
        raise ConfigurationError(
            f"line {lines.get(key)}: key {key!r} expects a number or list", key=key, line=lines.get(key)
        ) from None
    if len(parts) == 1:
        return np.full(n, parts[0])
    if len(parts) != n:
        raise ConfigurationError(
            f"line {lines.get(key)}: key {key!r} has {len(parts)} entries, expected {n}",
            key=key, line=lines.get(key),
        )
    return np.asarray(parts)


def _popularity(values, key, lines, n, zipf_exponent):
    kind = values.get(key, "zipf").strip().lower()
    if kind == "zipf":
        return build_zipf_popularity(n, zipf_exponent)
    if kind == "uniform":
        return np.full(n, 1.0 / n)
    if kind == "reverse_zipf":
        return build_zipf_popularity(n, zipf_exponent)[::-1].copy()
    return _vector(values, key, lines, n, 0.0)


def _bool(value):
    v = str(value).strip().lower()
    if v in ("auto", "none"):
        return None
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(value)


def settings_from_mapping(values, lines=None):
    """Build :class:`Settings` from a ``{dotted_key: str}`` mapping."""
    lines = lines or {}
    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigurationError(f"missing required key {key!r}", key=key)
    n = _num(values, "catalog.n_items", lines, cast=int)
    if n < 1:
        raise ConfigurationError("catalog.n_items must be >= 1", key="catalog.n_items")
    z = _num(values, "catalog.zipf_exponent", lines, 1.0)
    catalog = ItemCatalog(
        sizes=_vector(values, "catalog.size", lines, n, 1.0),
        popularity=_popularity(values, "catalog.popularity", lines, n, z),
        refresh_rates=_vector(values, "catalog.refresh_rate", lines, n, 1.0),
    )
    law = values.get("demand.arrival", "poisson").strip().lower()
    demand = DemandSpec(
        beta=_num(values, "demand.beta", lines),
        arrival_law=law,
        omega=_num(values, "demand.omega", lines, 1.0),
    )
    costs = CostParams(_num(values, "costs.fetch", lines), _num(values, "costs.aging", lines))
    budget_raw = values.get("capacity.budget", "unlimited").strip().lower()
    budget = math.inf if budget_raw == "unlimited" else _num(values, "capacity.budget", lines)
    fraction = None
    if "capacity.budget_fraction" in values:
        fraction = _num(values, "capacity.budget_fraction", lines)
        from .optimal_policy import solve_alpha

        base = solve_alpha(catalog, demand.beta, costs.fetch_unit_cost, costs.aging_unit_cost, None)
        budget = fraction * base.analytic_occupancy if fraction < 1 else math.inf
    try:
        share = _bool(values.get("qlearning.share_table", "auto"))
    except ValueError:
        raise ConfigurationError("qlearning.share_table expects true/false/auto",
                                 key="qlearning.share_table") from None
    q = QConfig(
        time_step=_num(values, "qlearning.time_step", lines, 0.1),
        learning_rate=_num(values, "qlearning.learning_rate", lines, 0.1),
        discount=_num(values, "qlearning.discount", lines, 0.99),
        epsilon_initial=_num(values, "qlearning.epsilon_initial", lines, 0.2),
        epsilon_floor=_num(values, "qlearning.epsilon_floor", lines, 0.01),
        epsilon_decay_frac=_num(values, "qlearning.epsilon_decay_frac", lines, 0.5),
        max_age_steps=_num(values, "qlearning.max_age_steps", lines, 600, cast=int),
        train_horizon=_num(values, "qlearning.train_horizon", lines, 0.0),
        share_table=share,
    )
    scenario = ScenarioConfig(
        catalog=catalog,
        demand=demand,
        costs=costs,
        capacity=CapacityConstraint(budget),
        horizon_seconds=_num(values, "sim.horizon", lines),
        seed=_num(values, "sim.seed", lines, cast=int),
        swiftcache_theta=_num(values, "swiftcache.theta", lines, 0.005),
        qlearning=q,
        warmup_frac=_num(values, "sim.warmup_frac", lines, 0.1),
        sample_every=_num(values, "sim.sample_every", lines, 0.0),
    )
    swift = {}
    if "swiftcache.tau_max" in values:
        swift["tau_max"] = _num(values, "swiftcache.tau_max", lines)
    if "swiftcache.lambda_estimator" in values:
        swift["lambda_estimator"] = values["swiftcache.lambda_estimator"].strip()
    shift = {}
    if "shift.at" in values:
        shift["at"] = _num(values, "shift.at", lines)
        shift["catalog"] = catalog.replace(
            popularity=_popularity(values, "shift.popularity", lines, n, z)
            if "shift.popularity" in values else catalog.popularity,
            refresh_rates=_vector(values, "shift.refresh_rate", lines, n, 0.0)
            if "shift.refresh_rate" in values else catalog.refresh_rates,
        )
        shift["burn_in_requests"] = _num(values, "shift.burn_in_requests", lines,
                                         5.0 / scenario.swiftcache_theta)
        shift["qlearning_continue"] = bool(_bool(values.get("shift.qlearning_continue", "false")))
    oracle = {}
    for key in ("fetch_cost", "aging_slope", "discount"):
        if f"oracle.{key}" in values:
            oracle[key] = _num(values, f"oracle.{key}", lines)
    if "oracle.s_max" in values:
        oracle["s_max"] = _num(values, "oracle.s_max", lines, cast=int)
    return Settings(
        scenario=scenario, raw=dict(values), lines=dict(lines), swiftcache=swift, shift=shift,
        oracle=oracle, runs=_num(values, "sim.runs", lines, 1, cast=int), budget_fraction=fraction,
    )


def load_settings(path):
    with open(path) as fh:
        text = fh.read()
    values, lines = parse_text(text)
    return settings_from_mapping(values, lines)


def load_config(path):
    """Load only the :class:`ScenarioConfig` from a config file."""
    return load_settings(path).scenario


def _fmt(v):
    return repr(float(v))


def _fmt_vec(arr):
    arr = np.asarray(arr, dtype=float)
    if arr.size and np.all(arr == arr[0]):
        return _fmt(arr[0])
    return ",".join(_fmt(x) for x in arr)


def dump_config(config):
    """Serialise a :class:`ScenarioConfig` to config-file text (inverse of :func:`load_config`)."""
    cat, q = config.catalog, config.qlearning
    budget = "unlimited" if config.capacity.unlimited else _fmt(config.capacity.budget)
    share = "auto" if q.share_table is None else str(bool(q.share_table)).lower()
    lines = [
        f"catalog.n_items = {cat.n_items}",
        f"catalog.popularity = {','.join(_fmt(x) for x in cat.popularity)}",
        f"catalog.size = {_fmt_vec(cat.sizes)}",
        f"catalog.refresh_rate = {_fmt_vec(cat.refresh_rates)}",
        f"demand.beta = {_fmt(config.demand.beta)}",
        f"demand.arrival = {config.demand.arrival_law}",
        f"demand.omega = {_fmt(config.demand.omega)}",
        f"costs.fetch = {_fmt(config.costs.fetch_unit_cost)}",
        f"costs.aging = {_fmt(config.costs.aging_unit_cost)}",
        f"capacity.budget = {budget}",
        f"sim.horizon = {_fmt(config.horizon_seconds)}",
        f"sim.seed = {int(config.seed)}",
        f"sim.warmup_frac = {_fmt(config.warmup_frac)}",
        f"sim.sample_every = {_fmt(config.sample_every)}",
        f"swiftcache.theta = {_fmt(config.swiftcache_theta)}",
        f"qlearning.time_step = {_fmt(q.time_step)}",
        f"qlearning.learning_rate = {_fmt(q.learning_rate)}",
        f"qlearning.discount = {_fmt(q.discount)}",
        f"qlearning.epsilon_initial = {_fmt(q.epsilon_initial)}",
        f"qlearning.epsilon_floor = {_fmt(q.epsilon_floor)}",
        f"qlearning.epsilon_decay_frac = {_fmt(q.epsilon_decay_frac)}",
        f"qlearning.max_age_steps = {int(q.max_age_steps)}",
        f"qlearning.train_horizon = {_fmt(q.train_horizon)}",
        f"qlearning.share_table = {share}",
    ]
    return "\n".join(lines) + "\n"
