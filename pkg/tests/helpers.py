import numpy as np

from fisherce import make_instance


def random_instance(rng, kind="linear", n=5, m=5, dist="uniform", sparsity=0.0):
    if dist == "uniform":
        v = rng.uniform(size=(n, m))
    elif dist == "integer":
        v = rng.integers(1, 11, size=(n, m)).astype(float)
    elif dist == "exponential":
        v = rng.exponential(size=(n, m))
    else:
        v = rng.lognormal(size=(n, m))
    if sparsity:
        v[rng.uniform(size=(n, m)) < sparsity] = 0.0
        for i in range(n):
            if not (v[i] > 0).any():
                v[i, rng.integers(m)] = 1.0
        for j in range(m):
            if not (v[:, j] > 0).any():
                v[rng.integers(n), j] = 1.0
    budgets = rng.uniform(0.5, 2.0, size=n)
    return make_instance(kind, v, budgets)


def best_utility(inst, p):
    """Largest attainable utility at prices ``p`` plus the kept-money credit.

    Linear: ``B_i max_j v_ij / p_j``.  Quasi-linear: ``B_i max(1, max_j v_ij / p_j)``,
    i.e. the optimal value of ``(v_i - p) x_i + B_i`` under the budget.
    """
    ratio = np.where(inst.support, inst.valuations / p[None, :], 0.0).max(axis=1)
    if inst.has_outside:
        ratio = np.maximum(ratio, 1.0)
    return inst.budgets * ratio


def achieved_utility(inst, p, x):
    if inst.has_outside:
        return ((inst.valuations - p[None, :]) * x).sum(axis=1) + inst.budgets
    return (inst.valuations * x).sum(axis=1)


def allocation_violations(inst, p, x, eps):
    """Worst violation of the three approximate-equilibrium conditions.

    Returns ``(overspend, utility_shortfall, clearing_error)``; the first two
    should be <= 0 and the last <= eps.
    """
    spend = (p[None, :] * x).sum(axis=1)
    overspend = float((spend - inst.budgets).max())
    factor = 1.0 - 2.0 * eps / inst.total_budget
    short = float((factor * best_utility(inst, p) - achieved_utility(inst, p, x)).max())
    clearing = float(np.abs(x.sum(axis=0) - 1.0).max())
    return overspend, short, clearing
