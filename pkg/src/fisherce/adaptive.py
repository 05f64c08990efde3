"""Exact equilibrium prices: inner solves at shrinking accuracy plus recovery."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .apm import apm_params, apm_solve, epsilon_cap
from .baselines import BaselineConfig, tatonnement_solve
from .certify import DEFAULT_TOL, Certificate, exact_allocation, test_optimality
from .market import MarketInstance, eval_F, price_bounds, project_box
from .recovery import gap_Delta, recover

LADDER_FACTOR = 4.0
LADDER_FLOOR = 1e-13


class Inner(enum.Enum):
    APM = "apm"
    TATONNEMENT = "tat"


@dataclass(frozen=True)
class AdaptiveConfig:
    """Outer-loop settings.

    ``modulus`` overrides the growth constant used in the recovery radius
    (default ``exp(mu_lower - 1)``).  With ``radius_ladder`` each round also
    retries recovery at radii shrinking by a factor 4 below the default
    radius; every candidate is still certified before it is accepted.
    """

    theta: float = 0.25
    max_outer: int = 60
    inner: Inner = Inner.APM
    certify_tol: float = DEFAULT_TOL
    modulus: float | None = None
    radius_ladder: bool = True
    strict: bool = False
    inner_max_iters: int | None = None
    tat_iter_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "inner", Inner(self.inner))
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


@dataclass
class ExactResult:
    mu_star: np.ndarray
    certified: bool
    certificate: Certificate | None
    allocation: np.ndarray | None
    outer_iterations: int
    inner_iterations_total: int
    delta_star_observed: float
    sigma: float
    radius_used: float | None = None
    history: list[dict] = field(default_factory=list)

    @property
    def prices(self) -> np.ndarray:
        return np.exp(self.mu_star)

    def to_dict(self) -> dict:
        return {
            "prices": self.prices.tolist(),
            "mu": self.mu_star.tolist(),
            "allocation": None if self.allocation is None else self.allocation.tolist(),
            "certified": self.certified,
            "delta_star": _finite_or_none(self.delta_star_observed),
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations_total,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
        }


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def k_bound(sigma: float, delta_star: float, theta: float) -> int:
    """Outer rounds after which the default recovery radius is small enough."""
    if not (sigma > 0 and delta_star > 0 and 0 < theta < 1):
        raise ValueError("need sigma > 0, delta_star > 0 and 0 < theta < 1")
    x = math.sqrt(sigma) * delta_star / 6.0
    if x >= 1 or math.isinf(x):
        return 1
    return max(math.ceil(2 * math.log(x) / math.log(theta)), 1)


def recovery_radii(r: float, ladder: bool):
    yield r
    if ladder:
        r /= LADDER_FACTOR
        while r >= LADDER_FLOOR:
            yield r
            r /= LADDER_FACTOR


def _inner_solve(inst, bounds, cfg: AdaptiveConfig, eps: float, mu):
    if cfg.inner is Inner.APM:
        params = apm_params(inst, bounds, eps, cfg.strict, max_iters=cfg.inner_max_iters)
        rep = apm_solve(inst, params, mu)
        return rep.mu_out, rep.iterations
    # fixed-step tâtonnement: step eps, about log(1/eps)/eps steps
    steps = int(math.ceil(cfg.tat_iter_scale * max(math.log(1 / eps), 1.0) / eps))
    if cfg.inner_max_iters:
        steps = min(steps, cfg.inner_max_iters)
    conf = BaselineConfig("tat", stepsize=eps, max_iters=steps)
    rep = tatonnement_solve(inst, bounds, conf, p0=np.exp(mu))
    return rep.mu_out, rep.iterations


def try_recover(inst, mu, radius: float, ladder: bool, tol: float):
    """First certified recovery along the radius ladder, or ``None``."""
    f_here = eval_F(inst, mu)
    seen = set()
    for r in recovery_radii(radius, ladder):
        res = recover(inst, mu, r)
        if not res.recovered or res.family.sets in seen:
            continue
        seen.add(res.family.sets)
        # the true optimum can only lower the objective
        if eval_F(inst, res.mu) > f_here + 1e-12 * (1 + abs(f_here)):
            continue
        cert = test_optimality(inst, res.mu, tol)
        if cert.optimal:
            return res.mu, cert, r
    return None


def adaptive_solve(inst: MarketInstance, config: AdaptiveConfig | None = None, mu0=None) -> ExactResult:
    """Solve to accuracy ``theta**k`` for k = 1, 2, ... and stop at the first
    recovered point that passes the optimality certificate."""
    cfg = config or AdaptiveConfig()
    bounds = price_bounds(inst)
    sigma = cfg.modulus if cfg.modulus is not None else math.exp(bounds.mu_lower - 1.0)
    cap = epsilon_cap(bounds)
    if mu0 is None:
        mu = np.full(inst.m, 0.5 * (bounds.mu_lower + bounds.mu_upper))
    else:
        mu = project_box(mu0, bounds.mu_lower, bounds.mu_upper)
    total = 0
    history = []
    for k in range(1, cfg.max_outer + 1):
        eps = cfg.theta**k
        if cfg.strict:
            eps = min(eps, cap)
        mu, iters = _inner_solve(inst, bounds, cfg, eps, project_box(mu, bounds.mu_lower, bounds.mu_upper))
        total += iters
        radius = math.sqrt(2 * eps / sigma)
        hit = try_recover(inst, mu, radius, cfg.radius_ladder, cfg.certify_tol)
        history.append({"k": k, "epsilon": eps, "iterations": iters, "radius": radius,
                        "f_value": eval_F(inst, mu), "certified": hit is not None})
        if hit is not None:
            mu_star, cert, r_used = hit
            _, x = exact_allocation(inst, cert, mu_star)
            return ExactResult(
                mu_star=mu_star, certified=True, certificate=cert, allocation=x,
                outer_iterations=k, inner_iterations_total=total,
                delta_star_observed=gap_Delta(inst, mu_star), sigma=sigma,
                radius_used=r_used, history=history,
            )
    cert = test_optimality(inst, mu, cfg.certify_tol)
    return ExactResult(
        mu_star=mu, certified=False, certificate=cert, allocation=None,
        outer_iterations=cfg.max_outer, inner_iterations_total=total,
        delta_star_observed=gap_Delta(inst, mu), sigma=sigma, history=history,
    )
