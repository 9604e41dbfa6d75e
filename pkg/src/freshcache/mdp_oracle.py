"""Discounted per-item MDP over request arrivals, solved by value iteration.

Decisions happen at request arrivals. In state ``s`` (arrivals since the
last fetch) the cache either serves the stored copy at expected aging cost
``aging_slope * s`` and moves to ``s + 1``, or fetches at cost ``fetch_cost``
and restarts from ``s = 1``. The chain is truncated at ``s_max`` with a
self-loop. Used to check the threshold structure of the optimal policy and
as an oracle for the Q-learning baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError, IterationLimitError

TIE_RTOL = 1e-9


@dataclass(frozen=True)
class PerItemMdp:
    fetch_cost: float
    aging_slope: float
    discount: float
    s_max: int

    def __post_init__(self):
        if not self.fetch_cost > 0:
            raise InvalidArgumentError("fetch_cost must be > 0")
        if not self.aging_slope >= 0:
            raise InvalidArgumentError("aging_slope must be >= 0")
        if not 0 < self.discount < 1:
            raise InvalidArgumentError("discount must lie in (0, 1)")
        if int(self.s_max) != self.s_max or self.s_max < 2:
            raise InvalidArgumentError("s_max must be an integer >= 2")

    @classmethod
    def from_item(cls, size, popularity, refresh_rate, beta, fetch_cost, aging_cost,
                  discount, s_max=None):
        """Per-arrival MDP for one catalog item.

        The aging slope is the expected number of updates between two
        arrivals times ``aging_cost``: ``c_a * lambda / (beta p)``.
        """
        F = size * fetch_cost
        kappa = aging_cost * refresh_rate / (beta * popularity)
        if s_max is None:
            s_max = default_s_max(F, kappa)
        return cls(F, kappa, discount, int(s_max))

    @property
    def states(self):
        return np.arange(1, self.s_max + 1)


def default_s_max(fetch_cost, aging_slope):
    """Cap large enough (>= 4 F/kappa) that truncation never binds at the optimum."""
    if aging_slope <= 0:
        return 2
    return max(2, int(math.ceil(4.0 * fetch_cost / aging_slope)) + 2)


def _q_values(mdp, v):
    s = mdp.states
    nxt = np.minimum(s + 1, mdp.s_max) - 1
    serve = mdp.aging_slope * s + mdp.discount * v[nxt]
    fetch = mdp.fetch_cost + mdp.discount * v[0]
    return serve, np.full_like(serve, fetch)


def value_iteration(mdp, tol=1e-10, max_iter=1_000_000):
    """Iterate ``v(s) = min(kappa s + q v(s+1), F + q v(1))`` from ``v = 0``.

    Returns ``(values, policy)`` indexed by ``s - 1``; the policy is greedy
    with respect to the converged values and prefers serving (0) on ties,
    counting action values within :data:`TIE_RTOL` (relative) as tied.
    """
    if not tol > 0:
        raise InvalidArgumentError("tol must be > 0")
    v = np.zeros(mdp.s_max)
    for _ in range(int(max_iter)):
        serve, fetch = _q_values(mdp, v)
        v_new = np.minimum(serve, fetch)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    else:
        raise IterationLimitError(f"value iteration did not converge in {max_iter} iterations")
    serve, fetch = _q_values(mdp, v)
    # ties within float noise of the values count as ties: serve
    slack = TIE_RTOL * max(1.0, float(np.max(np.abs(v))))
    policy = (fetch < serve - slack).astype(np.int8)
    return v, policy


def first_iterate_policy(mdp):
    """Greedy policy after one iteration from ``v_0 = 0``: fetch iff ``kappa s > F``."""
    serve, fetch = _q_values(mdp, np.zeros(mdp.s_max))
    return (fetch < serve).astype(np.int8)


def extract_threshold(policy):
    """Smallest ``s*`` with ``u(s) = 0`` for ``s <= s*`` and ``u(s) = 1`` above; ``None`` otherwise.

    ``policy[k]`` is the action in state ``s = k + 1``. A policy that never
    fetches maps to ``len(policy)``.
    """
    u = np.asarray(policy).astype(int)
    ones = np.flatnonzero(u == 1)
    if ones.size == 0:
        return int(u.size)
    s_star = int(ones[0])
    if not np.all(u[s_star:] == 1):
        return None
    return s_star


def threshold_policy_values(mdp, threshold):
    """Exact discounted values of "fetch iff s > threshold" by a linear solve."""
    n = mdp.s_max
    s = mdp.states
    fetch = s > threshold
    P = np.zeros((n, n))
    cost = np.where(fetch, mdp.fetch_cost, mdp.aging_slope * s)
    P[fetch, 0] = 1.0
    idx = np.flatnonzero(~fetch)
    P[idx, np.minimum(idx + 1, n - 1)] = 1.0
    return np.linalg.solve(np.eye(n) - mdp.discount * P, cost)


def brute_force_threshold(mdp, rtol=1e-9):
    """Best threshold by exhaustive evaluation of every ``0..s_max``.

    Returns ``(best, ties)``: ``best`` is the largest threshold whose summed
    values are minimal (serving wins ties) and ``ties`` is every threshold
    within ``rtol`` of that minimum.
    """
    totals = np.array([threshold_policy_values(mdp, k).sum() for k in range(mdp.s_max + 1)])
    m = totals.min()
    ties = np.flatnonzero(totals <= m + rtol * max(1.0, abs(m)))
    return int(ties.max()), [int(k) for k in ties]
