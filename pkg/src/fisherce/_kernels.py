"""Compiled inner loops for the iterative price-adjustment methods.

Each driver runs at most ``steps`` iterations on arrays it mutates in place
and returns how many it took, so the Python side can chunk long runs and
collect traces.  Status codes are shared by all drivers.
"""
import math

import numpy as np
from numba import njit

RUNNING = 0
STOPPED = 1  # method-specific stopping rule fired
TARGET = 2  # objective reached the caller's target
NONFINITE = 3


@njit(cache=True)
def objective(logv, mask, budgets, outside, mu):
    n, m = logv.shape
    total = 0.0
    for j in range(m):
        total += math.exp(mu[j])
    for i in range(n):
        h = 0.0 if outside else -np.inf
        for j in range(m):
            if mask[i, j]:
                s = logv[i, j] - mu[j]
                if s > h:
                    h = s
        total += budgets[i] * h
    return total


@njit(cache=True)
def smoothed_grad(logv, mask, budgets, outside, mu, delta, grad, work):
    """Fill ``grad`` with the smoothed gradient at ``mu``; return the smoothed value."""
    n, m = logv.shape
    value = 0.0
    for j in range(m):
        e = math.exp(mu[j])
        grad[j] = e
        value += e
    for i in range(n):
        h = 0.0 if outside else -np.inf
        for j in range(m):
            if mask[i, j]:
                s = logv[i, j] - mu[j]
                work[j] = s
                if s > h:
                    h = s
        z = math.exp(-h / delta) if outside else 0.0
        for j in range(m):
            if mask[i, j]:
                e = math.exp((work[j] - h) / delta)
                work[j] = e
                z += e
        value += budgets[i] * (h + delta * math.log(z))
        scale = budgets[i] / z
        for j in range(m):
            if mask[i, j]:
                grad[j] -= scale * work[j]
    return value


@njit(cache=True)
def apm_run(logv, mask, budgets, outside, mu, y, delta, inv_L, lo, hi, coef,
            stop_thr, f_target, steps, t0, trace_every, trace_t, trace_f, trace_g):
    """Accelerated projected gradient steps on the smoothed objective.

    ``mu`` and ``y`` hold the current iterate and extrapolated point.  The
    stopping test is evaluated at ``mu`` before each step.  Returns
    ``(steps_taken, status, grad_norm_at_mu, n_trace)``.
    """
    m = mu.shape[0]
    g = np.empty(m)
    work = np.empty(m)
    new = np.empty(m)
    ntr = 0
    check_target = f_target > -np.inf
    for k in range(steps + 1):
        smoothed_grad(logv, mask, budgets, outside, mu, delta, g, work)
        gn = 0.0
        for j in range(m):
            gn += g[j] * g[j]
        gn = math.sqrt(gn)
        if not math.isfinite(gn):
            return k, NONFINITE, gn, ntr
        t = t0 + k
        fval = np.nan
        if trace_every > 0 and t % trace_every == 0 and ntr < trace_t.shape[0]:
            fval = objective(logv, mask, budgets, outside, mu)
            trace_t[ntr] = t
            trace_f[ntr] = fval
            trace_g[ntr] = gn
            ntr += 1
        if gn <= stop_thr:
            return k, STOPPED, gn, ntr
        if check_target:
            if math.isnan(fval):
                fval = objective(logv, mask, budgets, outside, mu)
            if fval <= f_target:
                return k, TARGET, gn, ntr
        if k == steps:
            return k, RUNNING, gn, ntr
        smoothed_grad(logv, mask, budgets, outside, y, delta, g, work)
        for j in range(m):
            v = y[j] - g[j] * inv_L
            if v < lo:
                v = lo
            elif v > hi:
                v = hi
            new[j] = v
        for j in range(m):
            y[j] = new[j] + coef * (new[j] - mu[j])
            mu[j] = new[j]
            if not math.isfinite(mu[j]):
                return k + 1, NONFINITE, gn, ntr
    return steps, RUNNING, gn, ntr


@njit(cache=True)
def split_spend(logv, mask, budgets, outside, p, logp, spend):
    """Equal-split spending at prices ``p``; returns the objective at ``log p``."""
    n, m = logv.shape
    total = 0.0
    for j in range(m):
        logp[j] = math.log(p[j])
        spend[j] = 0.0
        total += p[j]
    for i in range(n):
        h = 0.0 if outside else -np.inf
        for j in range(m):
            if mask[i, j]:
                s = logv[i, j] - logp[j]
                if s > h:
                    h = s
        total += budgets[i] * h
        cut = h - 1e-12 * (1.0 + abs(h))
        cnt = 1 if (outside and 0.0 >= cut) else 0
        for j in range(m):
            if mask[i, j] and logv[i, j] - logp[j] >= cut:
                cnt += 1
        share = budgets[i] / cnt
        for j in range(m):
            if mask[i, j] and logv[i, j] - logp[j] >= cut:
                spend[j] += share
    return total


@njit(cache=True)
def tatonnement_run(logv, mask, budgets, outside, p, gamma, lo, hi, f_target,
                    steps, t0, trace_every, trace_t, trace_f, trace_g):
    """Additive price updates ``p += gamma * (spend - p)`` clamped to ``[lo, hi]``."""
    m = p.shape[0]
    logp = np.empty(m)
    spend = np.empty(m)
    ntr = 0
    fval = np.nan
    for k in range(steps + 1):
        fval = split_spend(logv, mask, budgets, outside, p, logp, spend)
        t = t0 + k
        if trace_every > 0 and t % trace_every == 0 and ntr < trace_t.shape[0]:
            gn = 0.0
            for j in range(m):
                gn += (p[j] - spend[j]) ** 2
            trace_t[ntr] = t
            trace_f[ntr] = fval
            trace_g[ntr] = math.sqrt(gn)
            ntr += 1
        if fval <= f_target:
            return k, TARGET, fval, ntr
        if k == steps:
            return k, RUNNING, fval, ntr
        for j in range(m):
            v = p[j] + gamma * (spend[j] - p[j])
            if v < lo:
                v = lo
            elif v > hi:
                v = hi
            if not math.isfinite(v):
                return k + 1, NONFINITE, fval, ntr
            p[j] = v
    return steps, RUNNING, fval, ntr


@njit(cache=True)
def pr_run(val, mask, logv, budgets, outside, bids, bids0, gamma, f_target,
           steps, t0, trace_every, trace_t, trace_f, trace_g):
    """Proportional-response bid updates.

    ``bids0`` carries the outside-option bid for quasi-linear markets.  With
    ``gamma < 1`` the new bids are a geometric blend of old and response bids.
    """
    n, m = val.shape
    p = np.empty(m)
    logp = np.empty(m)
    resp = np.empty(m)
    ntr = 0
    fval = np.nan
    for k in range(steps + 1):
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += bids[i, j]
            p[j] = s
            logp[j] = math.log(s)
        fval = 0.0
        for j in range(m):
            fval += p[j]
        for i in range(n):
            h = 0.0 if outside else -np.inf
            for j in range(m):
                if mask[i, j]:
                    s = logv[i, j] - logp[j]
                    if s > h:
                        h = s
            fval += budgets[i] * h
        t = t0 + k
        if trace_every > 0 and t % trace_every == 0 and ntr < trace_t.shape[0]:
            trace_t[ntr] = t
            trace_f[ntr] = fval
            trace_g[ntr] = np.nan
            ntr += 1
        if fval <= f_target:
            return k, TARGET, fval, ntr
        if k == steps:
            return k, RUNNING, fval, ntr
        for i in range(n):
            tot = 0.0
            for j in range(m):
                if mask[i, j]:
                    u = val[i, j] * bids[i, j] / p[j]
                    resp[j] = u
                    tot += u
            u0 = bids0[i] if outside else 0.0
            tot += u0
            if gamma == 1.0:
                for j in range(m):
                    if mask[i, j]:
                        bids[i, j] = budgets[i] * resp[j] / tot
                if outside:
                    bids0[i] = budgets[i] * u0 / tot
            else:
                norm = 0.0
                for j in range(m):
                    if mask[i, j]:
                        b = bids[i, j] ** (1.0 - gamma) * (budgets[i] * resp[j] / tot) ** gamma
                        bids[i, j] = b
                        norm += b
                b0 = 0.0
                if outside:
                    b0 = bids0[i] ** (1.0 - gamma) * (budgets[i] * u0 / tot) ** gamma
                    norm += b0
                for j in range(m):
                    if mask[i, j]:
                        bids[i, j] *= budgets[i] / norm
                if outside:
                    bids0[i] = b0 * budgets[i] / norm
    return steps, RUNNING, fval, ntr
