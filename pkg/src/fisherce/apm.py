"""Accelerated price adjustment on the entropy-smoothed log-price objective."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .errors import EpsilonOutOfRange, NonFiniteIterate
from .market import (
    DemandWeights,
    MarketInstance,
    PriceBounds,
    SmoothedObjective,
    eval_F,
    grad_F_delta,
    price_bounds,
    project_box,
    smoothed_objective,
)

TRACE_FULL_UNTIL = 100_000
CHUNK = 100_000


@dataclass(frozen=True)
class ApmParams:
    epsilon: float
    bounds: PriceBounds
    smooth: SmoothedObjective
    strict: bool = False
    max_iters: int | None = None
    trace_decimation: int = 10

    @property
    def delta(self) -> float:
        return self.smooth.delta

    @property
    def eta(self) -> float:
        return self.smooth.eta

    @property
    def stop_threshold(self) -> float:
        se = self.smooth.sigma * self.epsilon
        return min(se, math.sqrt(se))

    @property
    def momentum(self) -> float:
        return momentum_coefficient(self.smooth.q)

    @property
    def box(self) -> tuple[float, float]:
        return self.bounds.mu_lower - self.eta, self.bounds.mu_upper + self.eta


@dataclass
class ApmState:
    t: int
    mu: np.ndarray
    y: np.ndarray
    last_grad_norm: float = math.inf


@dataclass
class SolveReport:
    """Outcome of one iterative solve; shared by APM and the baselines."""

    algo: str
    mu_out: np.ndarray
    iterations: int
    final_grad_norm: float
    f_value: float
    status: str
    trace: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def prices(self) -> np.ndarray:
        return np.exp(self.mu_out)

    @property
    def converged(self) -> bool:
        return self.status in ("stopped", "target")

    @property
    def max_iters_exceeded(self) -> bool:
        return self.status == "max_iters"


def momentum_coefficient(q: float) -> float:
    r = math.sqrt(q)
    return (1.0 - r) / (1.0 + r)


def epsilon_cap(bounds: PriceBounds, eta: float = 1.0) -> float:
    """Largest epsilon for which the relaxed box provably holds the smoothed minimizer."""
    return math.exp(bounds.mu_lower - eta) * eta * eta


def delta_for(inst: MarketInstance, epsilon: float, bounds: PriceBounds, eta: float = 1.0) -> float:
    scale = 2.0 * math.log(inst.m + 1) * inst.total_budget
    return min(epsilon, epsilon_cap(bounds, eta)) / scale


def apm_params(
    inst: MarketInstance,
    bounds: PriceBounds | None,
    epsilon: float,
    strict: bool = False,
    *,
    eta: float = 1.0,
    max_iters: int | None = None,
) -> ApmParams:
    """Derive smoothing, curvature constants and the stopping threshold.

    In strict mode epsilon must not exceed ``exp(mu_lower - eta) * eta**2``
    (``exp(mu_lower - 1)`` for the default ``eta = 1``).  Otherwise any
    positive epsilon is accepted and delta is capped so the relaxed box
    still contains the smoothed minimizer.
    """
    if bounds is None:
        bounds = price_bounds(inst)
    if not epsilon > 0:
        raise EpsilonOutOfRange("epsilon must be positive")
    cap = epsilon_cap(bounds, eta)
    if strict and epsilon > cap * (1 + 1e-12):
        raise EpsilonOutOfRange(f"strict mode needs epsilon <= {cap:.6g}, got {epsilon:.6g}")
    smooth = smoothed_objective(inst, bounds, delta_for(inst, epsilon, bounds, eta), eta)
    return ApmParams(epsilon=float(epsilon), bounds=bounds, smooth=smooth, strict=strict,
                     max_iters=max_iters)


def default_mu0(params: ApmParams, m: int) -> np.ndarray:
    b = params.bounds
    return np.full(m, 0.5 * (b.mu_lower + b.mu_upper))


def default_max_iters(inst: MarketInstance, params: ApmParams, mu0) -> int:
    """Ten times the iteration count implied by the accelerated linear rate.

    The initial smoothed gap is estimated by ``||grad||^2 / (2 sigma)``.
    """
    s = params.smooth
    g, _ = grad_F_delta(inst, s, mu0)
    c1 = max(float(g @ g) / (2 * s.sigma), 1e-300)
    eps = params.epsilon
    target = min(s.sigma**2 * eps**2, s.sigma * eps) / (2 * s.L)
    log_term = max(math.log(c1 / target), 1.0)
    return int(10 * math.ceil(log_term / math.sqrt(s.q)))


def init_state(params: ApmParams, mu0) -> ApmState:
    mu0 = np.array(mu0, dtype=float)
    return ApmState(t=0, mu=mu0, y=mu0.copy())


def apm_step(inst: MarketInstance, params: ApmParams, state: ApmState) -> ApmState:
    """One gradient step at the extrapolated point, then the momentum update."""
    s = params.smooth
    g, _ = grad_F_delta(inst, s, state.y)
    lo, hi = params.box
    mu_next = project_box(state.y - g / s.L, lo, hi)
    y_next = mu_next + params.momentum * (mu_next - state.mu)
    if not (np.all(np.isfinite(mu_next)) and np.all(np.isfinite(y_next))):
        raise NonFiniteIterate(f"non-finite iterate at t={state.t + 1}")
    gn = float(np.linalg.norm(grad_F_delta(inst, s, mu_next)[0]))
    return ApmState(t=state.t + 1, mu=mu_next, y=y_next, last_grad_norm=gn)


class TraceBuffer:
    """Collects ``(t, F, grad_norm)`` rows, decimating long runs."""

    def __init__(self, enabled: bool, decimation: int = 10, full_until: int | None = None):
        self.enabled = enabled
        self.decimation = max(int(decimation), 1)
        self.full_until = TRACE_FULL_UNTIL if full_until is None else full_until
        self.parts: list[np.ndarray] = []

    def every(self, t: int) -> int:
        if not self.enabled:
            return 0
        return 1 if t < self.full_until else self.decimation

    def chunk_len(self, t: int, steps: int) -> int:
        if self.enabled and t < self.full_until:
            return min(steps, self.full_until - t)
        return steps

    def buffers(self, steps: int, every: int):
        size = steps // every + 2 if every else 0
        return np.empty(size), np.empty(size), np.empty(size)

    def add(self, bufs, count: int):
        if not count:
            return
        rows = np.column_stack([b[:count] for b in bufs])
        if self.parts:
            # chunk boundaries record the shared iterate twice
            rows = rows[rows[:, 0] > self.parts[-1][-1, 0]]
        if len(rows):
            self.parts.append(rows)

    def result(self) -> np.ndarray | None:
        if not self.enabled:
            return None
        if not self.parts:
            return np.empty((0, 3))
        return np.vstack(self.parts)


def _kernel_arrays(inst: MarketInstance):
    return (
        np.ascontiguousarray(inst.log_valuations),
        np.ascontiguousarray(inst.support),
        np.ascontiguousarray(inst.budgets),
        inst.has_outside,
    )


def _run_stage(inst, smooth, stop_thr, lo, hi, mu, y, f_target, t0, budget, tracer):
    """Drive the compiled loop until stop, target, or ``budget`` steps."""
    logv, mask, b, outside = _kernel_arrays(inst)
    coef = momentum_coefficient(smooth.q)
    inv_L = 1.0 / smooth.L
    t = t0
    left = budget
    while True:
        steps = tracer.chunk_len(t, min(left, CHUNK))
        every = tracer.every(t)
        bufs = tracer.buffers(steps, every)
        taken, status, gn, ntr = K.apm_run(
            logv, mask, b, outside, mu, y, smooth.delta, inv_L, lo, hi, coef,
            stop_thr, f_target, steps, t, every, *bufs,
        )
        tracer.add(bufs, ntr)
        t += taken
        left -= taken
        if status == K.NONFINITE:
            raise NonFiniteIterate(f"non-finite iterate near t={t}")
        if status != K.RUNNING or left <= 0:
            return t, status, gn


def apm_solve(
    inst: MarketInstance,
    params: ApmParams,
    mu0=None,
    *,
    trace: bool = False,
    f_target: float | None = None,
    continuation: bool = False,
) -> SolveReport:
    """Iterate until the gradient test passes, ``F <= f_target``, or the cap.

    With ``continuation=True`` the smoothing starts coarse (delta matching
    epsilon = 1, or the requested epsilon if larger) and is halved after each
    warm-started stage meets its own stopping test; the last stage uses
    ``params`` exactly.
    """
    lo, hi = params.box
    if mu0 is None:
        mu0 = default_mu0(params, inst.m)
    mu = project_box(np.array(mu0, dtype=float), params.bounds.mu_lower, params.bounds.mu_upper)
    y = mu.copy()
    max_iters = params.max_iters or default_max_iters(inst, params, mu)
    tracer = TraceBuffer(trace, params.trace_decimation)
    target = -np.inf if f_target is None else float(f_target)

    stages = []
    if continuation:
        eps = max(1.0, params.epsilon)
        while eps > params.epsilon * 2:
            stages.append(eps)
            eps /= 2
    t = 0
    status = K.RUNNING
    gn = math.inf
    for eps in stages:
        sp = apm_params(inst, params.bounds, eps, eta=params.eta)
        t, status, gn = _run_stage(inst, sp.smooth, sp.stop_threshold, lo, hi, mu, y,
                                   target, t, max_iters - t, tracer)
        y[:] = mu
        if status in (K.TARGET,) or t >= max_iters:
            break
    if not stages or (status != K.TARGET and t < max_iters):
        t, status, gn = _run_stage(inst, params.smooth, params.stop_threshold, lo, hi, mu, y,
                                   target, t, max_iters - t, tracer)

    name = {K.STOPPED: "stopped", K.TARGET: "target"}.get(status, "max_iters")
    return SolveReport(
        algo="apm",
        mu_out=mu.copy(),
        iterations=t,
        final_grad_norm=float(gn),
        f_value=eval_F(inst, mu),
        status=name,
        trace=tracer.result(),
        info={
            "epsilon": params.epsilon,
            "delta": params.delta,
            "L": params.smooth.L,
            "sigma": params.smooth.sigma,
            "stop_threshold": params.stop_threshold,
            "max_iters": max_iters,
            "continuation": continuation,
        },
    )


def approx_allocation(inst: MarketInstance, params: ApmParams, mu_out, weights: DemandWeights | None = None):
    """Allocation ``x_ij = B_i w_ij / p_j`` from the smoothed demand weights.

    Returns ``(prices, x)``.
    """
    mu_out = np.asarray(mu_out, dtype=float)
    if weights is None:
        _, weights = grad_F_delta(inst, params.smooth, mu_out)
    p = np.exp(mu_out)
    return p, weights.spend / p[None, :]


def with_epsilon(params: ApmParams, inst: MarketInstance, epsilon: float) -> ApmParams:
    fresh = apm_params(inst, params.bounds, epsilon, params.strict, eta=params.eta)
    return replace(fresh, trace_decimation=params.trace_decimation)
