"""``freshcache`` command line.

Every subcommand reads a dotted-key config file (``--config``), prints a JSON
summary on stdout and, with ``--output out.csv``, writes the CSV rows there and
the JSON summary next to it as ``out.json``. Exit status is 0 on success, 1 on
configuration errors and 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import Settings, load_settings
from .engine import run, write_event_log
from .exceptions import ConfigurationError
from .experiments import (
    POLICIES,
    SWEEP_PARAMS,
    analytic_reference,
    evaluate,
    fresh_start_rate,
    make_policy,
    popularity_shift,
    sweep,
)
from .mdp_oracle import PerItemMdp, extract_threshold, value_iteration
from .metrics import rows_to_csv
from .optimal_policy import OptimalTimerPolicy

DEFAULT_SWEEP_POLICIES = {
    "omega": ("swiftcache", "qlearning"),
    "budget": ("timer", "swiftcache"),
    "theta": ("swiftcache",),
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _emit(args, summary, rows=None):
    text = json.dumps(_jsonable(summary), indent=2, sort_keys=True)
    if args.output:
        if rows is not None:
            with open(args.output, "w", newline="") as fh:
                fh.write(rows_to_csv(rows))
        stem, _ = os.path.splitext(args.output)
        with open(stem + ".json", "w") as fh:
            fh.write(text + "\n")
    print(text)


def _settings(args):
    if not args.config:
        raise ConfigurationError("--config is required for this subcommand", key="--config")
    settings = load_settings(args.config)
    scenario = settings.scenario
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.duration is not None:
        changes["horizon_seconds"] = args.duration
    if args.warmup_frac is not None:
        changes["warmup_frac"] = args.warmup_frac
    if changes:
        settings.scenario = scenario.replace(**changes)
    if args.runs is None:
        args.runs = settings.runs
    return settings


def _policy_list(text, default):
    if not text:
        return tuple(default)
    names = tuple(p.strip() for p in text.split(",") if p.strip())
    for name in names:
        if name not in POLICIES:
            raise ConfigurationError(f"unknown policy {name!r}; expected one of {POLICIES}", key="policy")
    return names


def _parse_values(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            out.append(float(part))
    if not out:
        raise ConfigurationError("--values needs at least one number", key="--values")
    return out


def cmd_optimal(args):
    settings = _settings(args)
    cfg = settings.scenario
    policy = OptimalTimerPolicy.from_scenario(cfg).fit(cfg.catalog)
    summary = {
        "timers": policy.timers_,
        "multiplier": policy.multiplier_,
        "cost": policy.cost_,
        "occupancy": policy.occupancy_,
        "optimal_cost_unlimited": policy.optimal_cost_,
        "budget": cfg.capacity.budget,
    }
    rows = [{"param": "", "policy": "optimal", "seed": "", "avg_cost_rate": policy.cost_,
             "occupancy": policy.occupancy_}]
    _emit(args, summary, rows)


def cmd_simulate(args):
    settings = _settings(args)
    cfg = settings.scenario
    policy_name = args.policy or "swiftcache"
    if policy_name not in POLICIES:
        raise ConfigurationError(f"unknown policy {policy_name!r}", key="policy")
    if args.event_log:
        policy = make_policy(policy_name, cfg, settings.swiftcache, args.qtable_in)
        report = run(cfg, policy, event_log=True)
        write_event_log(report, args.event_log)
    rows, reports = evaluate(cfg, (policy_name,), args.runs, swiftcache=settings.swiftcache,
                             qtable=args.qtable_in, jobs=args.jobs)
    optimal, _ = analytic_reference(cfg)
    summary = {
        "policy": policy_name,
        "analytic_optimum": optimal,
        "reports": [r.to_dict() for r in reports[policy_name]],
    }
    if policy_name == "qlearning":
        summary["model_based_reports"] = [r.to_dict() for r in reports["swiftcache"]]
    if args.dump_state or args.qtable_out:
        # the last seed's learned state, rerun to keep `evaluate` stateless
        last = cfg.replace(seed=cfg.seed + args.runs - 1)
        policy = make_policy(policy_name, last, settings.swiftcache, args.qtable_in)
        run(last, policy)
        if args.dump_state and policy_name == "swiftcache":
            summary["swiftcache_state"] = policy.state_.to_dict()
        elif args.dump_state and policy_name == "timer":
            summary["timers"] = policy.timers_
        if args.qtable_out and policy_name == "qlearning":
            policy.q_table_.save(args.qtable_out)
    _emit(args, summary, rows)


def cmd_train_q(args):
    settings = _settings(args)
    cfg = settings.scenario
    policy = make_policy("qlearning", cfg, qtable=args.qtable_in)
    # --duration (or an unset qlearning.train_horizon) sets the training length
    if args.duration is not None or not policy.train_horizon > 0:
        policy.set_params(train_horizon=cfg.horizon_seconds)
    policy.fit(cfg)
    if args.qtable_out:
        policy.q_table_.save(args.qtable_out)
    rep = policy.training_report_
    greedy = policy.predict(np.c_[np.arange(1, policy.max_age_steps + 1),
                                  np.ones(policy.max_age_steps, dtype=int)])
    summary = {"training_report": rep.to_dict(), "greedy_fetch_states_r1": np.flatnonzero(greedy) + 1}
    rows = [{"param": "", "policy": "qlearning", "seed": rep.seed,
             "avg_cost_rate": rep.avg_cost_rate, "occupancy": rep.occupancy_time_average}]
    _emit(args, summary, rows)


def cmd_sweep(args):
    settings = _settings(args)
    if args.param not in SWEEP_PARAMS:
        raise ConfigurationError(f"--param must be one of {SWEEP_PARAMS}", key="--param")
    values = _parse_values(args.values)
    policies = _policy_list(args.policy, DEFAULT_SWEEP_POLICIES[args.param])
    rows = sweep(settings.scenario, args.param, values, policies, args.runs,
                 swiftcache=settings.swiftcache, qtable=args.qtable_in, jobs=args.jobs)
    summary = {"param": args.param, "values": values, "policies": list(policies),
               "runs": args.runs, "rows": [r for r in rows if r.get("seed") == ""]}
    _emit(args, summary, rows)


def cmd_oracle(args):
    opts = {}
    if args.config:
        opts.update(load_settings(args.config).oracle)
    for key in ("fetch_cost", "aging_slope", "discount", "s_max"):
        val = getattr(args, key)
        if val is not None:
            opts[key] = val
    for key in ("fetch_cost", "aging_slope", "discount"):
        if key not in opts:
            raise ConfigurationError(f"missing oracle parameter 'oracle.{key}'", key=f"oracle.{key}")
    if "s_max" not in opts:
        from .mdp_oracle import default_s_max

        opts["s_max"] = default_s_max(opts["fetch_cost"], opts["aging_slope"])
    mdp = PerItemMdp(float(opts["fetch_cost"]), float(opts["aging_slope"]), float(opts["discount"]),
                     int(opts["s_max"]))
    v, u = value_iteration(mdp)
    _emit(args, {"values": v, "policy": u.astype(int), "threshold": extract_threshold(u),
                 "mdp": {"fetch_cost": mdp.fetch_cost, "aging_slope": mdp.aging_slope,
                         "discount": mdp.discount, "s_max": mdp.s_max}})


def cmd_shift(args):
    settings: Settings = _settings(args)
    if not settings.shift:
        raise ConfigurationError("config has no shift.at key", key="shift.at")
    cfg = settings.scenario
    policy_name = args.policy or "swiftcache"
    sh = settings.shift
    rows, results = [], []
    for k in range(args.runs):
        c = cfg.replace(seed=cfg.seed + k)
        res = popularity_shift(c, make_policy(policy_name, c, settings.swiftcache, args.qtable_in),
                               sh["catalog"], sh["at"], burn_in_requests=sh["burn_in_requests"],
                               qlearning_continue=sh["qlearning_continue"])
        entry = {"seed": c.seed, "burn_in": res.burn_in, "phase_rates": res.phase_rates}
        for idx, rate in enumerate(res.phase_rates, start=1):
            rows.append({"param": idx, "policy": policy_name, "seed": c.seed, "avg_cost_rate": rate})
        if policy_name != "qlearning":
            fresh = fresh_start_rate(c, make_policy(policy_name, c, settings.swiftcache),
                                     sh["catalog"], sh["at"] + res.burn_in)
            entry["fresh_start_rate"] = fresh
            rows.append({"param": 3, "policy": policy_name + "_fresh", "seed": c.seed,
                         "avg_cost_rate": fresh})
        results.append(entry)
    _emit(args, {"policy": policy_name, "shift_at": sh["at"], "runs": results}, rows)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="dotted-key config file")
    common.add_argument("--policy", help="policy name (sweep: comma list)")
    common.add_argument("--seed", type=int, help="override sim.seed")
    common.add_argument("--runs", type=int, help="number of seeds (override sim.runs)")
    common.add_argument("--duration", type=float, help="override sim.horizon in seconds")
    common.add_argument("--warmup-frac", type=float, dest="warmup_frac", help="override sim.warmup_frac")
    common.add_argument("--output", help="CSV path; the JSON summary goes next to it")
    common.add_argument("--dump-state", action="store_true", dest="dump_state",
                        help="include the final learned policy state in the JSON summary")
    common.add_argument("--qtable-in", dest="qtable_in", help="load a Q-table (.json or .npz)")
    common.add_argument("--qtable-out", dest="qtable_out", help="save the Q-table (.json or .npz)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for seeds")

    parser = argparse.ArgumentParser(prog="freshcache", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimal", parents=[common], help="closed-form optimal timers").set_defaults(func=cmd_optimal)
    p = sub.add_parser("simulate", parents=[common], help="simulate one policy over seeds")
    p.add_argument("--event-log", dest="event_log", help="CSV event log of the first seed")
    p.set_defaults(func=cmd_simulate)
    sub.add_parser("train-q", parents=[common], help="train a Q-table").set_defaults(func=cmd_train_q)
    p = sub.add_parser("sweep", parents=[common], help="sweep omega, budget fraction or theta")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("oracle", parents=[common], help="value iteration on the per-item MDP")
    p.add_argument("--fetch-cost", type=float, dest="fetch_cost")
    p.add_argument("--aging-slope", type=float, dest="aging_slope")
    p.add_argument("--discount", type=float)
    p.add_argument("--s-max", type=int, dest="s_max")
    p.set_defaults(func=cmd_oracle)
    sub.add_parser("shift", parents=[common], help="popularity/refresh-rate shift experiment").set_defaults(
        func=cmd_shift)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigurationError as exc:
        where = []
        if exc.key:
            where.append(f"key {exc.key}")
        if exc.line:
            where.append(f"line {exc.line}")
        suffix = f" ({', '.join(where)})" if where else ""
        print(f"config error: {exc}{suffix}", file=sys.stderr)
        return 1
    except OSError as exc:
        if args.config and getattr(exc, "filename", None) == args.config:
            print(f"config error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
            return 1
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
