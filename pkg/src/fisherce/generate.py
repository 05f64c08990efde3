"""Random market instances with unit budgets."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .market import Kind, MarketInstance, make_instance


class Dist(enum.Enum):
    UNIFORM = "uniform"  # U(0, 1)
    INTEGER = "integer"  # uniform on {1, ..., int_max}
    EXPONENTIAL = "exponential"  # rate 1
    LOGNORMAL = "lognormal"  # log-mean 0, log-sd 1


@dataclass(frozen=True)
class GenSpec:
    kind: Kind
    n: int
    m: int
    dist: Dist = Dist.UNIFORM
    seed: int = 0
    int_max: int = 10

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "dist", Dist(self.dist))
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.int_max < 1:
            raise ValueError("int_max must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["dist"] = self.dist.value
        return d


def _draw(rng: np.random.Generator, spec: GenSpec, size):
    if spec.dist is Dist.UNIFORM:
        return rng.uniform(0.0, 1.0, size)
    if spec.dist is Dist.INTEGER:
        return rng.integers(1, spec.int_max + 1, size).astype(float)
    if spec.dist is Dist.EXPONENTIAL:
        return rng.exponential(1.0, size)
    return rng.lognormal(0.0, 1.0, size)


def generate(spec: GenSpec) -> MarketInstance:
    """Deterministic in ``spec``; zero rows and columns are redrawn."""
    rng = np.random.default_rng(spec.seed)
    v = _draw(rng, spec, (spec.n, spec.m))
    for _ in range(1000):
        rows = ~(v > 0).any(axis=1)
        cols = ~(v > 0).any(axis=0)
        if not rows.any() and not cols.any():
            break
        v[rows] = _draw(rng, spec, (int(rows.sum()), spec.m))
        v[:, cols] = _draw(rng, spec, (spec.n, int(cols.sum())))
    return make_instance(spec.kind, v, np.ones(spec.n))
