"""Independent reference computations used by several test modules.

Nothing here imports the package under test.
"""

from decimal import Decimal, getcontext

import numpy as np

getcontext().prec = 50


def timer_decimal(b, p, lam, beta, c_f, c_a, alpha=0):
    """Optimal timer evaluated in 50-digit decimal arithmetic."""
    b, p, lam, beta, c_f, c_a, alpha = (Decimal(str(v)) for v in (b, p, lam, beta, c_f, c_a, alpha))
    rate = beta * p
    inner = 1 + 2 * b * (rate * c_f - alpha) / (c_a * lam)
    root = inner.sqrt() - 1
    return max(root, Decimal(0)) / rate


def cost_decimal(tau, b, p, lam, beta, c_f, c_a):
    tau, b, p, lam, beta, c_f, c_a = (Decimal(str(v)) for v in (tau, b, p, lam, beta, c_f, c_a))
    return beta * p * (Decimal("0.5") * c_a * lam * p * beta * tau**2 + b * c_f) / (1 + beta * p * tau)


def occupancy_decimal(tau, b, p, beta):
    tau, b, p, beta = (Decimal(str(v)) for v in (tau, b, p, beta))
    x = beta * p * tau
    return b * x / (1 + x)


def grid_alpha(b, p, lam, beta, c_f, c_a, budget, n_grid=10**6):
    """Smallest grid multiplier whose timers meet the budget, by brute force over the bracket."""
    b, p, lam = (np.asarray(v, dtype=float) for v in (b, p, lam))
    rate = beta * p
    hi = float(np.max(rate) * c_f)
    grid = np.linspace(0.0, hi, n_grid)
    occ = np.zeros(n_grid)
    for k in range(b.size):
        # beyond its own cutoff rate * c_f an item's timer is zero
        m = int(np.searchsorted(grid, rate[k] * c_f))
        tau = rate[k] * c_f - grid[:m]
        tau *= 2.0 * b[k] / (c_a * lam[k])
        tau += 1.0
        np.sqrt(tau, out=tau)
        tau -= 1.0
        # occupancy b x / (1 + x) with x = rate * tau = sqrt(...) - 1
        occ[:m] += b[k] * tau / (1.0 + tau)
    feasible = np.flatnonzero(occ <= budget)
    return grid[feasible[0]], grid[1] - grid[0]
