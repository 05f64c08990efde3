"""Exact recovery of equilibrium log-prices from a nearby approximate point.

Index sets use the numbering ``0`` for the outside option and ``1..m`` for
the goods, so good ``j`` corresponds to ``mu[j - 1]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGood
from .market import MarketInstance, active_mask, best_scores, scores

OUTSIDE = 0


@dataclass(frozen=True)
class IndexFamily:
    """Per-buyer index sets, each a sorted tuple, with the best scores ``h``."""

    sets: tuple[tuple[int, ...], ...]
    h: np.ndarray | None = None

    def __post_init__(self):
        sets = tuple(tuple(sorted(set(int(j) for j in s))) for s in self.sets)
        if any(len(s) == 0 for s in sets):
            raise ValueError("every index set must be nonempty")
        object.__setattr__(self, "sets", sets)

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    def covered(self) -> set[int]:
        out: set[int] = set()
        for s in self.sets:
            out.update(s)
        return out

    def covers_goods(self, m: int) -> bool:
        return set(range(1, m + 1)) <= self.covered()


@dataclass
class Traversal:
    """How one class was grown: the seed buyer, the indices checked in order,
    and the buyers each check pulled in."""

    seed: int
    checked: list[int] = field(default_factory=list)
    new_buyers: list[list[int]] = field(default_factory=list)


@dataclass
class ConnectionPartition:
    class_members: list[list[int]]
    class_unions: list[set[int]]
    traversal: list[Traversal]

    def __len__(self):
        return len(self.class_members)


@dataclass
class RecoveryResult:
    mu: np.ndarray | None
    family: IndexFamily
    partition: ConnectionPartition | None = None

    @property
    def recovered(self) -> bool:
        return self.mu is not None

    @property
    def outcome(self) -> str:
        return "recovered" if self.recovered else "not_covered"


def gap_Delta(inst: MarketInstance, mu) -> float:
    """Smallest gap between a buyer's best score and its best non-maximal score."""
    s = scores(inst, mu)
    h = best_scores(inst, mu)
    goods, outside = active_mask(inst, mu)
    rest = np.where(inst.support & ~goods, s, -np.inf)
    second = rest.max(axis=1)
    if inst.has_outside:
        second = np.where(outside, second, np.maximum(second, 0.0))
    gaps = h - second
    return float(gaps.min())


def _family_from_mask(goods: np.ndarray, outside: np.ndarray, h) -> IndexFamily:
    sets = []
    for i in range(goods.shape[0]):
        idx = (np.flatnonzero(goods[i]) + 1).tolist()
        if outside[i]:
            idx.insert(0, OUTSIDE)
        sets.append(idx)
    return IndexFamily(tuple(sets), np.asarray(h))


def relaxed_active_sets(inst: MarketInstance, mu, r: float) -> IndexFamily:
    """``J_i = {j : log v_ij - mu_j >= h_i(mu) - 2r}`` with a tiny tie slack."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    goods, outside = active_mask(inst, mu, r)
    return _family_from_mask(goods, outside, best_scores(inst, mu))


def classify(fam: IndexFamily) -> ConnectionPartition:
    """Group buyers whose index sets are linked by chains of overlaps.

    Each class is grown from its lowest unclassified buyer by checking the
    indices of the current union one at a time (smallest unchecked first)
    and absorbing every unclassified buyer whose set contains that index.
    """
    n = len(fam)
    holders: dict[int, list[int]] = {}
    for i, s in enumerate(fam.sets):
        for j in s:
            holders.setdefault(j, []).append(i)
    unclassified = np.ones(n, dtype=bool)
    members, unions, records = [], [], []
    next_seed = 0
    while next_seed < n:
        if not unclassified[next_seed]:
            next_seed += 1
            continue
        seed = next_seed
        unclassified[seed] = False
        cls = [seed]
        union = set(fam.sets[seed])
        rec = Traversal(seed=seed)
        pending = sorted(union)
        checked: set[int] = set()
        while pending:
            j = pending.pop(0)
            checked.add(j)
            new = [i for i in holders.get(j, ()) if unclassified[i]]
            for i in new:
                unclassified[i] = False
            cls.extend(new)
            rec.checked.append(j)
            rec.new_buyers.append(new)
            added = {k for i in new for k in fam.sets[i]} - union
            if added:
                union |= added
                pending = sorted((union - checked))
        members.append(sorted(cls))
        unions.append(union)
        records.append(rec)
    return ConnectionPartition(members, unions, records)


def _logv(inst: MarketInstance, i: int, j: int) -> float:
    return 0.0 if j == OUTSIDE else float(inst.log_valuations[i, j - 1])


def solve_classes(inst: MarketInstance, part: ConnectionPartition, fam: IndexFamily) -> np.ndarray:
    """Closed-form log-prices on every class from the traversal records.

    Within a class, offsets ``a_j`` relative to the first checked index are
    propagated through the buyers that pulled each index in.  A class that
    contains the outside option is pinned by ``mu_0 = 0``; otherwise its
    prices must exhaust the class budget.
    """
    m = inst.m
    mu = np.full(m, np.nan)
    for cls, union, rec in zip(part.class_members, part.class_unions, part.traversal):
        j1 = rec.checked[0]
        a = {j1: 0.0}
        seed = rec.seed
        for j in fam.sets[seed]:
            a[j] = _logv(inst, seed, j) - _logv(inst, seed, j1)
        done = set(fam.sets[seed])
        for jt, new in zip(rec.checked, rec.new_buyers):
            for i in new:
                for j in fam.sets[i]:
                    if j not in done:
                        a[j] = a[jt] + _logv(inst, i, j) - _logv(inst, i, jt)
                for j in fam.sets[i]:
                    done.add(j)
        if OUTSIDE in union:
            base = -a[OUTSIDE]
        else:
            budget = float(sum(inst.budgets[i] for i in cls))
            offs = np.array([a[j] for j in union])
            top = offs.max()
            base = math.log(budget) - (top + math.log(np.exp(offs - top).sum()))
        for j in union:
            if j != OUTSIDE:
                mu[j - 1] = base + a[j]
    missing = np.flatnonzero(np.isnan(mu))
    if missing.size:
        raise MissingGood(f"goods {(missing + 1).tolist()} belong to no class")
    return mu


def recover(inst: MarketInstance, mu, r: float) -> RecoveryResult:
    """Guess the optimal active sets from ``mu`` and solve for the prices.

    Returns an unrecovered result when some good is in nobody's set.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    fam = relaxed_active_sets(inst, mu, r)
    if not fam.covers_goods(inst.m):
        return RecoveryResult(mu=None, family=fam)
    part = classify(fam)
    return RecoveryResult(mu=solve_classes(inst, part, fam), family=fam, partition=part)
