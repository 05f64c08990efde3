"""Reference price dynamics: additive tâtonnement and proportional response."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .apm import CHUNK, SolveReport, TraceBuffer
from .errors import NonFiniteIterate
from .market import MarketInstance, PriceBounds, eval_F, price_bounds, subgrad_F

DEFAULT_MAX_ITERS = 10_000_000


class Algo(enum.Enum):
    TATONNEMENT = "tat"
    PROPORTIONAL_RESPONSE = "pr"


@dataclass(frozen=True)
class BaselineConfig:
    algo: Algo
    stepsize: float | None = None
    max_iters: int = DEFAULT_MAX_ITERS
    eval_every: int = 10

    def __post_init__(self):
        object.__setattr__(self, "algo", Algo(self.algo))
        if self.stepsize is None:
            default = 1e-4 if self.algo is Algo.TATONNEMENT else 1.0
            object.__setattr__(self, "stepsize", default)
        if not self.stepsize > 0:
            raise ValueError("stepsize must be positive")
        if self.algo is Algo.PROPORTIONAL_RESPONSE and self.stepsize > 1:
            raise ValueError("proportional-response stepsize must lie in (0, 1]")


def _target(f_ref, target_gap):
    if f_ref is None:
        return -np.inf
    return float(f_ref) + float(target_gap)


def _report(algo, inst, mu, t, status, tracer, info):
    mu = np.asarray(mu, dtype=float)
    name = {K.TARGET: "target"}.get(status, "max_iters")
    return SolveReport(
        algo=algo,
        mu_out=mu,
        iterations=int(t),
        final_grad_norm=float(np.linalg.norm(subgrad_F(inst, mu))),
        f_value=eval_F(inst, mu),
        status=name,
        trace=tracer.result(),
        info=info,
    )


def tatonnement_solve(
    inst: MarketInstance,
    bounds: PriceBounds | None,
    config: BaselineConfig,
    target_gap: float = 0.0,
    f_ref: float | None = None,
    *,
    p0=None,
    trace: bool = False,
) -> SolveReport:
    """Additive tâtonnement ``p <- p + gamma * (demand - p)`` in price space.

    Demand uses equal splitting over each buyer's tied best goods.  Prices
    are clamped to the price box inflated by a factor ``e`` on each side.
    Stops once ``F(log p) <= f_ref + target_gap``; without ``f_ref`` it runs
    to ``config.max_iters``.
    """
    if bounds is None:
        bounds = price_bounds(inst)
    lo, hi = bounds.p_lower / math.e, bounds.p_upper * math.e
    if p0 is None:
        p0 = np.full(inst.m, math.sqrt(bounds.p_lower * bounds.p_upper))
    p = np.clip(np.array(p0, dtype=float), lo, hi)
    tracer = TraceBuffer(trace, config.eval_every)
    f_target = _target(f_ref, target_gap)
    args = (np.ascontiguousarray(inst.log_valuations), np.ascontiguousarray(inst.support),
            np.ascontiguousarray(inst.budgets), inst.has_outside)
    t, left, status = 0, config.max_iters, K.RUNNING
    while True:
        steps = tracer.chunk_len(t, min(left, CHUNK))
        every = tracer.every(t)
        bufs = tracer.buffers(steps, every)
        taken, status, _, ntr = K.tatonnement_run(*args, p, config.stepsize, lo, hi, f_target,
                                                 steps, t, every, *bufs)
        tracer.add(bufs, ntr)
        t += taken
        left -= taken
        if status == K.NONFINITE:
            raise NonFiniteIterate(f"tâtonnement diverged near t={t}")
        if status != K.RUNNING or left <= 0:
            break
    return _report("tat", inst, np.log(p), t, status, tracer,
                   {"stepsize": config.stepsize, "max_iters": config.max_iters})


def initial_bids(inst: MarketInstance):
    """Bids proportional to valuations, the outside option counting as value 1."""
    v = inst.valuations
    denom = v.sum(axis=1) + inst.alpha_inv
    bids = inst.budgets[:, None] * v / denom[:, None]
    bids0 = inst.budgets * inst.alpha_inv / denom
    return bids, bids0


def proportional_response_solve(
    inst: MarketInstance,
    config: BaselineConfig,
    target_gap: float = 0.0,
    f_ref: float | None = None,
    *,
    trace: bool = False,
) -> SolveReport:
    """Proportional-response bidding; prices are the column sums of the bids.

    Each buyer re-splits its budget in proportion to the utility each good
    delivered.  For quasi-linear markets the kept money acts as one more
    good with price 1 and valuation 1, so its utility share is the kept
    amount itself.  A stepsize below 1 blends old and new bids
    geometrically (mirror descent with a shorter step).
    """
    bids, bids0 = initial_bids(inst)
    bids = np.ascontiguousarray(bids)
    tracer = TraceBuffer(trace, config.eval_every)
    f_target = _target(f_ref, target_gap)
    args = (np.ascontiguousarray(inst.valuations), np.ascontiguousarray(inst.support),
            np.ascontiguousarray(inst.log_valuations), np.ascontiguousarray(inst.budgets),
            inst.has_outside)
    t, left, status = 0, config.max_iters, K.RUNNING
    while True:
        steps = tracer.chunk_len(t, min(left, CHUNK))
        every = tracer.every(t)
        bufs = tracer.buffers(steps, every)
        taken, status, _, ntr = K.pr_run(*args, bids, bids0, config.stepsize, f_target,
                                         steps, t, every, *bufs)
        tracer.add(bufs, ntr)
        t += taken
        left -= taken
        if status != K.RUNNING or left <= 0:
            break
    p = bids.sum(axis=0)
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise NonFiniteIterate("proportional response produced an invalid price")
    rep = _report("pr", inst, np.log(p), t, status, tracer,
                  {"stepsize": config.stepsize, "max_iters": config.max_iters})
    rep.info["bids"] = bids
    rep.info["outside_bids"] = bids0
    return rep
