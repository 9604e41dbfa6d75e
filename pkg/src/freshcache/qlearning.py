"""Model-free baseline: per-item tabular Q-learning over a 0.1 s step clock.

State is ``(s, r)``: ``s`` is the number of steps since the item was last
fetched (capped at ``max_age_steps``) and ``r`` flags whether the item is
requested during the current step. Actions are 0 (serve from cache) and 1
(fetch). Values are costs, so the greedy action is the argmin and the
bootstrap term uses ``min_u Q(S', u)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .domain import QConfig
from .exceptions import ConfigurationError, InvalidArgumentError
from .stochastic import RequestStream, make_stream

__all__ = [
    "QConfig",
    "QTable",
    "QLearningCache",
    "encode_state",
    "q_update",
    "select_action",
    "train_on_mdp",
    "epsilon_at",
]

# guards ceil() against binary round-off, e.g. 0.30000000000000004 / 0.1
_CEIL_SLACK = 1e-9


def encode_state(elapsed, request_present, cfg):
    """Map elapsed time since the last fetch to ``(s, r)`` with ``s = min(ceil(elapsed/step), S_max)``."""
    if elapsed < 0:
        raise InvalidArgumentError(f"elapsed must be >= 0, got {elapsed}")
    if math.isinf(elapsed):
        s = cfg.max_age_steps
    else:
        s = math.ceil(elapsed / cfg.time_step - _CEIL_SLACK)
        s = min(max(s, 1), cfg.max_age_steps)
    return int(s), int(bool(request_present))


@dataclass
class QTable:
    """Q values indexed ``[table, s, r, u]``; row ``s = 0`` is unused."""

    values: np.ndarray
    visits: np.ndarray

    @classmethod
    def zeros(cls, max_age_steps, n_tables=1):
        shape = (int(n_tables), int(max_age_steps) + 1, 2, 2)
        return cls(np.zeros(shape), np.zeros(shape, dtype=np.int64))

    @property
    def n_tables(self):
        return self.values.shape[0]

    @property
    def max_age_steps(self):
        return self.values.shape[1] - 1

    def greedy_policy(self, table=0):
        """Greedy action for every ``(s, r)``; ties go to 0."""
        q = self.values[table]
        return (q[..., 1] < q[..., 0]).astype(np.int8)

    def to_dict(self):
        return {
            "max_age_steps": self.max_age_steps,
            "n_tables": self.n_tables,
            "values": self.values.ravel().tolist(),
            "visits": self.visits.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        shape = (int(d["n_tables"]), int(d["max_age_steps"]) + 1, 2, 2)
        values = np.asarray(d["values"], dtype=float).reshape(shape)
        visits = np.asarray(d["visits"], dtype=np.int64).reshape(shape)
        return cls(values, visits)

    def save(self, path):
        path = str(path)
        if path.endswith(".npz"):
            np.savez(path, values=self.values, visits=self.visits)
        else:
            with open(path, "w") as fh:
                json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        path = str(path)
        if path.endswith(".npz"):
            with np.load(path) as data:
                return cls(data["values"].copy(), data["visits"].copy())
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def q_update(table, state, action, cost, next_state, cfg, table_index=0):
    """``Q(S,u) += lr * (cost + discount * min_u' Q(S',u') - Q(S,u))``."""
    s, r = state
    s2, r2 = next_state
    q = table.values[table_index]
    target = cost + cfg.discount * min(q[s2, r2, 0], q[s2, r2, 1])
    q[s, r, action] += cfg.learning_rate * (target - q[s, r, action])
    table.visits[table_index, s, r, action] += 1
    return table


def select_action(table, state, mode="eval", epsilon=0.0, rng=None, table_index=0):
    """Greedy (argmin, ties to 0) in ``"eval"``; epsilon-greedy in ``"train"``."""
    s, r = state
    q = table.values[table_index, s, r]
    if mode == "train":
        if rng is None:
            raise InvalidArgumentError("train mode needs an rng")
        if rng.random() < epsilon:
            return int(rng.integers(2))
    elif mode != "eval":
        raise InvalidArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")
    return 1 if q[1] < q[0] else 0


def epsilon_at(step, cfg, train_steps):
    """Exploration rate: exponential decay from initial to floor, then flat."""
    e0, e1 = cfg.epsilon_initial, cfg.epsilon_floor
    decay = cfg.epsilon_decay_frac * train_steps
    if e0 <= 0.0:
        return 0.0
    if decay <= 0 or step >= decay:
        return e1
    if e1 <= 0.0:
        return e0 * (1.0 - step / decay)
    return max(e1, e0 * (e1 / e0) ** (step / decay))


def train_on_mdp(mdp, cfg, n_steps, seed=0, episode_length=None):
    """Q-learning on a per-item arrival MDP with exploring starts.

    The MDP's states are arrival counts since the last fetch (``r = 1`` in
    every state). Each episode starts in a uniformly random state.
    """
    table = QTable.zeros(mdp.s_max)
    rng = np.random.default_rng(seed)
    episode_length = episode_length or 2 * mdp.s_max
    s = int(rng.integers(1, mdp.s_max + 1))
    for k in range(int(n_steps)):
        if k % episode_length == 0:
            s = int(rng.integers(1, mdp.s_max + 1))
        eps = epsilon_at(k, cfg, n_steps)
        u = select_action(table, (s, 1), "train", eps, rng)
        if u == 1:
            cost, s2 = mdp.fetch_cost, 1
        else:
            cost, s2 = mdp.aging_slope * s, min(s + 1, mdp.s_max)
        q_update(table, (s, 1), u, cost, (s2, 1), cfg)
        s = s2
    return table


@numba.njit(cache=True)
def _kernel_seed(seed):
    np.random.seed(seed)


@numba.njit(cache=True)
def _step_kernel(offsets, times, versions, sizes, table_of, Q, visits, h, n_steps,
                 train_steps, lr, gamma, eps0, eps1, decay_steps, s_max, c_f, c_a,
                 window_step, out_fetch, out_aging, out_wfetch, out_waging,
                 out_fetches, out_requests, first_fetch):
    n_items = sizes.shape[0]
    ptr = offsets[:-1].copy()
    cached = np.zeros(n_items, dtype=np.bool_)
    fetch_step = np.zeros(n_items, dtype=np.int64)
    cached_ver = np.zeros(n_items, dtype=np.int64)
    pin_t = np.zeros(n_items)
    pin_v = np.zeros(n_items, dtype=np.int64)
    use_ratio = eps1 > 0.0 and eps0 > 0.0
    for k in range(n_steps):
        t0 = k * h
        t1 = (k + 1) * h
        learning = k < train_steps
        if learning:
            if eps0 <= 0.0:
                eps = 0.0
            elif decay_steps <= 0 or k >= decay_steps:
                eps = eps1
            elif use_ratio:
                eps = max(eps1, eps0 * (eps1 / eps0) ** (k / decay_steps))
            else:
                eps = eps0 * (1.0 - k / decay_steps)
        else:
            eps = 0.0
        in_window = k >= window_step
        for n in range(n_items):
            tab = table_of[n]
            p = ptr[n]
            r = 1 if times[p] < t1 else 0
            if cached[n]:
                s = k - fetch_step[n]
                if s > s_max:
                    s = s_max
            else:
                s = s_max
            if not cached[n] and r == 1:
                u = 1
            elif learning and np.random.random() < eps:
                u = 1 if np.random.random() < 0.5 else 0
            else:
                u = 1 if Q[tab, s, r, 1] < Q[tab, s, r, 0] else 0
            f_cost = 0.0
            a_cost = 0.0
            if u == 1:
                if r == 1:
                    tf = times[p]
                    vf = versions[p]
                else:
                    # backend version at step start, drawn from the Poisson bridge
                    # between the last pinned instant and the next request
                    tf = t0 if t0 > pin_t[n] else pin_t[n]
                    span = times[p] - pin_t[n]
                    kcount = versions[p] - pin_v[n]
                    if kcount > 0 and span > 0.0:
                        frac = (tf - pin_t[n]) / span
                        vf = pin_v[n] + np.random.binomial(kcount, frac)
                    else:
                        vf = pin_v[n]
                pin_t[n] = tf
                pin_v[n] = vf
                if not cached[n]:
                    first_fetch[n] = tf
                cached[n] = True
                cached_ver[n] = vf
                fetch_step[n] = k
                f_cost = sizes[n] * c_f
                out_fetches[n] += 1
            while times[p] < t1:
                a_cost += c_a * (versions[p] - cached_ver[n])
                pin_t[n] = times[p]
                pin_v[n] = versions[p]
                out_requests[n] += 1
                p += 1
            ptr[n] = p
            out_fetch[n] += f_cost
            out_aging[n] += a_cost
            if in_window:
                out_wfetch[n] += f_cost
                out_waging[n] += a_cost
            if learning:
                s2 = k + 1 - fetch_step[n] if cached[n] else s_max
                if s2 > s_max:
                    s2 = s_max
                r2 = 1 if times[p] < t1 + h else 0
                q0 = Q[tab, s2, r2, 0]
                q1 = Q[tab, s2, r2, 1]
                best = q0 if q0 < q1 else q1
                Q[tab, s, r, u] += lr * (f_cost + a_cost + gamma * best - Q[tab, s, r, u])
                visits[tab, s, r, u] += 1


class QLearningCache(BaseEstimator):
    """Tabular Q-learning cache policy driven on a fixed step clock.

    ``fit(config)`` trains for ``train_horizon`` seconds; ``simulate(config)``
    runs the full ``config.horizon_seconds``, learning while the clock is below
    ``train_horizon`` and acting greedily (frozen table) afterwards.
    ``share_table=None`` shares one table across items when the catalog is
    symmetric.
    """

    def __init__(self, time_step=0.1, learning_rate=0.1, discount=0.99, epsilon_initial=0.2,
                 epsilon_floor=0.01, epsilon_decay_frac=0.5, max_age_steps=600,
                 train_horizon=0.0, share_table=None):
        self.time_step = time_step
        self.learning_rate = learning_rate
        self.discount = discount
        self.epsilon_initial = epsilon_initial
        self.epsilon_floor = epsilon_floor
        self.epsilon_decay_frac = epsilon_decay_frac
        self.max_age_steps = max_age_steps
        self.train_horizon = train_horizon
        self.share_table = share_table

    @classmethod
    def from_scenario(cls, config, **overrides):
        q = config.qlearning
        params = dict(
            time_step=q.time_step, learning_rate=q.learning_rate, discount=q.discount,
            epsilon_initial=q.epsilon_initial, epsilon_floor=q.epsilon_floor,
            epsilon_decay_frac=q.epsilon_decay_frac, max_age_steps=q.max_age_steps,
            train_horizon=q.train_horizon, share_table=q.share_table,
        )
        params.update(overrides)
        return cls(**params)

    @property
    def config_(self):
        return QConfig(
            time_step=self.time_step, learning_rate=self.learning_rate, discount=self.discount,
            epsilon_initial=self.epsilon_initial, epsilon_floor=self.epsilon_floor,
            epsilon_decay_frac=self.epsilon_decay_frac, max_age_steps=int(self.max_age_steps),
            train_horizon=self.train_horizon, share_table=self.share_table,
        )

    def _shared(self, catalog):
        return catalog.is_symmetric() if self.share_table is None else bool(self.share_table)

    def fit(self, config, y=None):
        """Train for ``train_horizon`` seconds of simulated time."""
        if not self.train_horizon > 0:
            raise ConfigurationError("train_horizon must be > 0 to fit", key="qlearning.train_horizon")
        cfg = config.replace(horizon_seconds=self.train_horizon, warmup_frac=0.0)
        self.training_report_ = self.simulate(cfg)
        return self

    def predict(self, X, table=0):
        """Greedy actions for rows ``(s, r)``."""
        check_is_fitted(self, "q_table_")
        X = np.atleast_2d(np.asarray(X, dtype=int))
        q = self.q_table_.values[table]
        return (q[X[:, 0], X[:, 1], 1] < q[X[:, 0], X[:, 1], 0]).astype(int)

    def simulate(self, config, *, phase=0):
        from .engine import SimulationReport, check_config, config_hash

        check_config(config)
        cfg = self.config_
        cat = config.catalog
        n = cat.n_items
        shared = self._shared(cat)
        n_tables = 1 if shared else n
        table = getattr(self, "q_table_", None)
        if table is None:
            table = QTable.zeros(cfg.max_age_steps, n_tables)
        elif table.n_tables != n_tables or table.max_age_steps != cfg.max_age_steps:
            raise ConfigurationError("loaded Q-table does not match the catalog/state space")
        self.q_table_ = table

        h = float(cfg.time_step)
        T = float(config.horizon_seconds)
        n_steps = int(math.ceil(T / h - _CEIL_SLACK))
        train_steps = int(math.ceil(min(cfg.train_horizon, T) / h - _CEIL_SLACK))
        window_step = int(math.ceil(config.warmup_frac * T / h - _CEIL_SLACK))
        end_time = n_steps * h

        rates = config.demand.beta * cat.popularity
        times, vers, offsets = [], [], [0]
        for i in range(n):
            stream = RequestStream(config.seed, i, rates[i], config.demand.shape, cat.refresh_rates[i],
                                   phase=phase)
            t, v = stream.arrays_until(end_time + h)
            if not np.isfinite(t[-1]):
                t, v = np.array([np.inf]), np.array([0], dtype=np.int64)
            times.append(t)
            vers.append(v)
            offsets.append(offsets[-1] + len(t))
        times = np.concatenate(times)
        vers = np.concatenate(vers).astype(np.int64)
        offsets = np.asarray(offsets, dtype=np.int64)

        table_of = np.zeros(n, dtype=np.int64) if shared else np.arange(n, dtype=np.int64)
        acc = {k: np.zeros(n) for k in ("fetch", "aging", "wfetch", "waging")}
        fetches = np.zeros(n, dtype=np.int64)
        requests = np.zeros(n, dtype=np.int64)
        first_fetch = np.full(n, np.inf)
        kseed = int(make_stream(config.seed, 0, "kernel", phase).integers(2**31 - 1))
        _kernel_seed(kseed)
        _step_kernel(
            offsets, times, vers, np.asarray(cat.sizes, dtype=float), table_of,
            table.values, table.visits, h, n_steps, train_steps,
            float(cfg.learning_rate), float(cfg.discount), float(cfg.epsilon_initial),
            float(cfg.epsilon_floor), float(cfg.epsilon_decay_frac * train_steps),
            int(cfg.max_age_steps), float(config.costs.fetch_unit_cost),
            float(config.costs.aging_unit_cost), window_step,
            acc["fetch"], acc["aging"], acc["wfetch"], acc["waging"], fetches, requests,
            first_fetch,
        )
        fetch_total = math.fsum(acc["fetch"])
        aging_total = math.fsum(acc["aging"])
        w0 = window_step * h
        wlen = end_time - w0
        held = np.where(np.isfinite(first_fetch), end_time - first_fetch, 0.0)
        held_w = np.where(np.isfinite(first_fetch), end_time - np.maximum(first_fetch, w0), 0.0)
        window_cost = math.fsum(acc["wfetch"]) + math.fsum(acc["waging"])
        return SimulationReport(
            policy=type(self).__name__,
            seed=int(config.seed),
            config_hash=config_hash(config),
            duration=end_time,
            total_cost=fetch_total + aging_total,
            fetch_cost=fetch_total,
            aging_cost=aging_total,
            avg_cost_rate=(fetch_total + aging_total) / end_time,
            request_count=int(requests.sum()),
            fetch_count=int(fetches.sum()),
            requests_per_item=requests.tolist(),
            fetches_per_item=fetches.tolist(),
            occupancy_time_average=float(np.sum(cat.sizes * held) / end_time),
            window_start=w0,
            window_cost=window_cost,
            window_cost_rate=window_cost / wlen if wlen > 0 else 0.0,
            window_occupancy=float(np.sum(cat.sizes * np.maximum(held_w, 0.0)) / wlen) if wlen > 0 else 0.0,
            extra={
                "window_fetch_cost": math.fsum(acc["wfetch"]),
                "window_aging_cost": math.fsum(acc["waging"]),
                "train_steps": train_steps,
                "shared_table": shared,
            },
        )
