"""Market data model and the log-price objective.

Prices are handled in log space throughout: ``mu[j] = log(p[j])``.  For a
quasi-linear market every buyer also has an outside option (keep the money)
that behaves like an extra good with valuation 1 and price 1, so its score
``log v_i0 - mu_0`` is identically 0.  Linear markets have no such column.

Pairs with ``v_ij == 0`` never enter a max or a softmax; they are masked out
rather than carried around as ``-inf``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateMatrix, DimensionMismatch, NonpositiveBudget

TIE_RTOL = 1e-12


class Kind(enum.Enum):
    LINEAR = "linear"
    QUASILINEAR = "quasilinear"

    @classmethod
    def parse(cls, value: "str | Kind") -> "Kind":
        if isinstance(value, Kind):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown utility kind {value!r}")


@dataclass(frozen=True, eq=False)
class MarketInstance:
    """Fisher market with ``n`` buyers and ``m`` divisible unit-supply goods.

    Construct freely, then pass through :func:`validate_instance` before
    solving.  Arrays are copied and frozen.
    """

    kind: Kind
    valuations: np.ndarray
    budgets: np.ndarray

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        v = np.array(self.valuations, dtype=float, copy=True)
        b = np.array(self.budgets, dtype=float, copy=True).reshape(-1)
        if v.ndim == 1:
            v = v.reshape(1, -1)
        v.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "valuations", v)
        object.__setattr__(self, "budgets", b)

    @property
    def n(self) -> int:
        return self.valuations.shape[0]

    @property
    def m(self) -> int:
        return self.valuations.shape[1]

    @property
    def has_outside(self) -> bool:
        return self.kind is Kind.QUASILINEAR

    @property
    def alpha_inv(self) -> float:
        # alpha = +inf for linear, 1 for quasi-linear
        return 1.0 if self.has_outside else 0.0

    @property
    def total_budget(self) -> float:
        return float(self.budgets.sum())

    @cached_property
    def support(self) -> np.ndarray:
        mask = self.valuations > 0
        mask.setflags(write=False)
        return mask

    @cached_property
    def log_valuations(self) -> np.ndarray:
        """``log v`` on the support, 0.0 (unused) elsewhere."""
        out = np.zeros_like(self.valuations)
        np.log(self.valuations, out=out, where=self.support)
        out.setflags(write=False)
        return out

    def __eq__(self, other):
        if not isinstance(other, MarketInstance):
            return NotImplemented
        return (
            self.kind is other.kind
            and np.array_equal(self.valuations, other.valuations)
            and np.array_equal(self.budgets, other.budgets)
        )

    __hash__ = None

    def __repr__(self):
        return f"MarketInstance(kind={self.kind.value}, n={self.n}, m={self.m})"


def validate_instance(inst: MarketInstance) -> MarketInstance:
    v, b = inst.valuations, inst.budgets
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
        raise DimensionMismatch(f"valuations must be a nonempty n x m matrix, got shape {v.shape}")
    if b.shape != (v.shape[0],):
        raise DimensionMismatch(f"{v.shape[0]} buyers but {b.size} budgets")
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(b))):
        raise DimensionMismatch("valuations and budgets must be finite")
    if np.any(v < 0):
        raise DegenerateMatrix("valuations must be nonnegative")
    if np.any(b <= 0):
        bad = np.flatnonzero(b <= 0).tolist()
        raise NonpositiveBudget(f"budgets must be positive (buyers {bad})")
    zero_rows = np.flatnonzero(~inst.support.any(axis=1))
    zero_cols = np.flatnonzero(~inst.support.any(axis=0))
    if zero_rows.size or zero_cols.size:
        raise DegenerateMatrix(
            f"zero rows {zero_rows.tolist()} / zero columns {zero_cols.tolist()} in valuations"
        )
    return inst


def make_instance(kind, valuations, budgets) -> MarketInstance:
    return validate_instance(MarketInstance(Kind.parse(kind), valuations, budgets))


@dataclass(frozen=True)
class PriceBounds:
    p_lower: float
    p_upper: float

    @property
    def mu_lower(self) -> float:
        return float(np.log(self.p_lower))

    @property
    def mu_upper(self) -> float:
        return float(np.log(self.p_upper))


def price_bounds(inst: MarketInstance) -> PriceBounds:
    """Box that contains every equilibrium price.

    For linear markets the upper end is ``max(||B||_1, max v)``; the extra
    ``max v`` only widens the box.
    """
    v, b, a_inv = inst.valuations, inst.budgets, inst.alpha_inv
    if inst.has_outside:
        p_upper = (1.0 - a_inv) * inst.total_budget + a_inv * float(v.max())
    else:
        p_upper = max(inst.total_budget, float(v.max()))
    ratio = v * b[:, None] / (v.sum(axis=1) + a_inv * b)[:, None]
    p_lower = float(ratio.max(axis=0).min())
    return PriceBounds(p_lower=p_lower, p_upper=float(p_upper))


@dataclass(frozen=True)
class SmoothedObjective:
    """Entropy-smoothed objective on the box relaxed by ``eta``."""

    delta: float
    eta: float
    L: float
    sigma: float

    @property
    def q(self) -> float:
        return self.sigma / self.L


def smoothed_objective(inst: MarketInstance, bounds: PriceBounds, delta: float, eta: float = 1.0):
    if delta <= 0:
        raise ValueError("delta must be positive")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    L = float(np.exp(bounds.mu_upper + eta) + inst.total_budget / delta)
    sigma = float(np.exp(bounds.mu_lower - eta))
    return SmoothedObjective(delta=float(delta), eta=float(eta), L=L, sigma=sigma)


@dataclass(frozen=True)
class DemandWeights:
    """Softmax spending shares at one point.

    ``spend[i, j] = B_i * w_ij`` over goods; ``outside[i]`` is the weight of
    the outside option (all zero for linear markets).
    """

    spend: np.ndarray
    outside: np.ndarray

    @property
    def shares(self) -> np.ndarray:
        return np.hstack([self.outside[:, None], self.spend]) if self.outside.size else self.spend


def _as_mu(inst: MarketInstance, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.shape != (inst.m,):
        raise DimensionMismatch(f"expected {inst.m} log-prices, got {mu.size}")
    return mu


def scores(inst: MarketInstance, mu) -> np.ndarray:
    """``log v_ij - mu_j`` on the support; off-support entries are meaningless."""
    return inst.log_valuations - _as_mu(inst, mu)[None, :]


def best_scores(inst: MarketInstance, mu) -> np.ndarray:
    """Per-buyer maximum ``h_i(mu)`` including the outside option."""
    s = scores(inst, mu)
    h = np.max(s, axis=1, where=inst.support, initial=-np.inf)
    if inst.has_outside:
        h = np.maximum(h, 0.0)
    return h


def active_mask(inst: MarketInstance, mu, radius: float = 0.0):
    """Indices within ``2 * radius`` of each buyer's best score.

    Returns ``(goods, outside)``: an ``n x m`` boolean matrix and a length-n
    boolean vector (all False for linear markets).  A relative tie slack
    keeps exact ties from being split by rounding.
    """
    s = scores(inst, mu)
    h = best_scores(inst, mu)
    cut = h - 2.0 * radius - TIE_RTOL * (1.0 + np.abs(h))
    goods = inst.support & (s >= cut[:, None])
    if inst.has_outside:
        outside = 0.0 >= cut
    else:
        outside = np.zeros(inst.n, dtype=bool)
    return goods, outside


def eval_F(inst: MarketInstance, mu) -> float:
    mu = _as_mu(inst, mu)
    return float(np.exp(mu).sum() + inst.budgets @ best_scores(inst, mu))


def _softmax_parts(inst: MarketInstance, mu, delta: float):
    s = scores(inst, mu)
    h = best_scores(inst, mu)
    e = np.zeros_like(s)
    np.exp((s - h[:, None]) / delta, out=e, where=inst.support)
    e0 = np.exp(-h / delta) if inst.has_outside else np.zeros(inst.n)
    z = e.sum(axis=1) + e0
    return h, e, e0, z


def eval_F_delta(inst: MarketInstance, smooth: SmoothedObjective, mu) -> float:
    mu = _as_mu(inst, mu)
    delta = smooth.delta if isinstance(smooth, SmoothedObjective) else float(smooth)
    h, _, _, z = _softmax_parts(inst, mu, delta)
    return float(np.exp(mu).sum() + inst.budgets @ (h + delta * np.log(z)))


def grad_F_delta(inst: MarketInstance, smooth: SmoothedObjective, mu):
    """Gradient of the smoothed objective and the demand weights behind it."""
    mu = _as_mu(inst, mu)
    delta = smooth.delta if isinstance(smooth, SmoothedObjective) else float(smooth)
    _, e, e0, z = _softmax_parts(inst, mu, delta)
    b = inst.budgets[:, None]
    spend = b * e / z[:, None]
    weights = DemandWeights(spend=spend, outside=(e0 / z) if inst.has_outside else np.zeros(0))
    return np.exp(mu) - spend.sum(axis=0), weights


def subgrad_F(inst: MarketInstance, mu) -> np.ndarray:
    """Equal-split subgradient: each buyer spreads its budget over its argmax set."""
    mu = _as_mu(inst, mu)
    goods, outside = active_mask(inst, mu)
    count = goods.sum(axis=1) + outside
    spend = inst.budgets[:, None] * goods / count[:, None]
    return np.exp(mu) - spend.sum(axis=0)


def project_box(mu, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ValueError("empty box")
    return np.clip(np.asarray(mu, dtype=float), lo, hi)
