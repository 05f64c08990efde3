"""Optimality certificates for candidate log-prices via maximum flow.

At exact optimality there must be spending ``lam[i, j] >= 0``, supported on
each buyer's best goods, such that every good's price is paid in full and
every buyer spends at most its budget; a buyer without the outside option
among its best choices must spend all of it.  Both conditions are checked
with max-flow computations.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import NotCertified
from .market import MarketInstance
from .recovery import OUTSIDE, IndexFamily, relaxed_active_sets

DEFAULT_TOL = 1e-8
RESIDUAL_RTOL = 1e-12


@dataclass
class FlowNetwork:
    """Directed network with arcs stored as parallel arrays.

    Node ``0`` is the source, node ``1`` the sink, goods are ``2 .. m+1``
    and buyers ``m+2 .. m+n+1``.  ``pairs`` lists the ``(i, j)`` buyer/good
    pair (0-based good) behind each good-to-buyer arc, ``None`` elsewhere.
    """

    n_nodes: int
    source: int
    sink: int
    tail: list[int]
    head: list[int]
    cap: list[float]
    pairs: list

    @property
    def n_arcs(self) -> int:
        return len(self.tail)

    def add_arc(self, u: int, v: int, c: float, pair=None) -> int:
        self.tail.append(u)
        self.head.append(v)
        self.cap.append(float(c))
        self.pairs.append(pair)
        return len(self.tail) - 1


def _good(j: int) -> int:
    return 2 + j


def _buyer(m: int, i: int) -> int:
    return 2 + m + i


def build_network(inst: MarketInstance, mu, fam: IndexFamily) -> FlowNetwork:
    """Source to goods at the prices, goods to interested buyers, buyers to sink."""
    mu = np.asarray(mu, dtype=float)
    n, m = inst.n, inst.m
    net = FlowNetwork(2 + m + n, 0, 1, [], [], [], [])
    for j in range(m):
        net.add_arc(net.source, _good(j), math.exp(mu[j]))
    for i, s in enumerate(fam.sets):
        for j in s:
            if j != OUTSIDE:
                net.add_arc(_good(j - 1), _buyer(m, i), inst.budgets[i], (i, j - 1))
    for i in range(n):
        net.add_arc(_buyer(m, i), net.sink, inst.budgets[i])
    return net


def max_flow(net: FlowNetwork, residual_tol: float | None = None):
    """Dinic's algorithm on real capacities.

    Residual capacities at or below ``residual_tol`` (default
    ``1e-12 * sum(capacities)``) count as saturated, which guarantees
    termination.  Returns ``(value, flows)`` with one flow per arc.
    """
    n_arcs = net.n_arcs
    finite = [c for c in net.cap if math.isfinite(c)]
    if residual_tol is None:
        residual_tol = RESIDUAL_RTOL * max(sum(finite), 1e-300)
    # residual graph: arc e forward at 2e, backward at 2e+1
    to = [0] * (2 * n_arcs)
    res = [0.0] * (2 * n_arcs)
    adj: list[list[int]] = [[] for _ in range(net.n_nodes)]
    for e in range(n_arcs):
        u, v = net.tail[e], net.head[e]
        to[2 * e], to[2 * e + 1] = v, u
        res[2 * e] = net.cap[e]
        adj[u].append(2 * e)
        adj[v].append(2 * e + 1)
    s, t = net.source, net.sink
    total = 0.0
    while True:
        level = [-1] * net.n_nodes
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for a in adj[u]:
                if res[a] > residual_tol and level[to[a]] < 0:
                    level[to[a]] = level[u] + 1
                    queue.append(to[a])
        if level[t] < 0:
            break
        ptr = [0] * net.n_nodes
        while True:
            pushed = _blocking_path(s, t, adj, to, res, level, ptr, residual_tol)
            if pushed <= 0:
                break
            total += pushed
    flows = np.array([net.cap[e] - res[2 * e] if math.isfinite(net.cap[e]) else res[2 * e + 1]
                      for e in range(n_arcs)])
    return total, flows


def _blocking_path(s, t, adj, to, res, level, ptr, tol):
    """Push flow along one shortest augmenting path; 0 when none is left."""
    stack = [s]
    path: list[int] = []
    while stack:
        u = stack[-1]
        if u == t:
            amount = min(res[a] for a in path)
            for a in path:
                res[a] -= amount
                res[a ^ 1] += amount
            return amount
        advanced = False
        while ptr[u] < len(adj[u]):
            a = adj[u][ptr[u]]
            v = to[a]
            if res[a] > tol and level[v] == level[u] + 1:
                stack.append(v)
                path.append(a)
                advanced = True
                break
            ptr[u] += 1
        if not advanced:
            level[u] = -1
            stack.pop()
            if path:
                path.pop()
                ptr[stack[-1]] += 1
    return 0.0


@dataclass
class Certificate:
    flow_value: float
    required: float
    deficit: float
    optimal: bool
    lam: np.ndarray
    tol: float
    family: IndexFamily

    def to_dict(self) -> dict:
        return {
            "flow_value": self.flow_value,
            "required": self.required,
            "deficit": self.deficit,
            "optimal": self.optimal,
            "tol": self.tol,
        }


def _circulation(inst: MarketInstance, mu, fam: IndexFamily):
    """Max flow whose value reaches ``required`` iff the exact-spend system is feasible.

    Goods must receive exactly their price and buyers without the outside
    option exactly their budget; these lower bounds are moved onto an
    auxiliary source/sink pair in the usual way.
    """
    mu = np.asarray(mu, dtype=float)
    n, m = inst.n, inst.m
    prices = np.exp(mu)
    s, t, ss, tt = 0, 1, 2 + m + n, 3 + m + n
    net = FlowNetwork(4 + m + n, ss, tt, [], [], [], [])
    for j in range(m):
        net.add_arc(ss, _good(j), prices[j])
    for i, js in enumerate(fam.sets):
        for j in js:
            if j != OUTSIDE:
                net.add_arc(_good(j - 1), _buyer(m, i), inst.budgets[i], (i, j - 1))
    tight_total = 0.0
    for i, js in enumerate(fam.sets):
        if OUTSIDE in js:
            net.add_arc(_buyer(m, i), t, inst.budgets[i])
        else:
            net.add_arc(_buyer(m, i), tt, inst.budgets[i])
            tight_total += inst.budgets[i]
    if tight_total > 0:
        net.add_arc(ss, t, tight_total)
    net.add_arc(t, s, math.inf)
    net.add_arc(s, tt, float(prices.sum()))
    value, flows = max_flow(net)
    return value, float(prices.sum()) + tight_total, net, flows


def _lam_from(inst, net, flows):
    lam = np.zeros((inst.n, inst.m + 1))
    for e, pair in enumerate(net.pairs):
        if pair is not None:
            i, j = pair
            lam[i, j + 1] += flows[e]
    lam[:, 0] = inst.budgets - lam[:, 1:].sum(axis=1)
    return lam


def test_optimality(inst: MarketInstance, mu, tol: float = DEFAULT_TOL) -> Certificate:
    """Decide whether ``mu`` minimizes the log-price objective, up to ``tol``.

    ``flow_value`` is the max flow from the source through goods and
    interested buyers; it must reach the total price.  ``deficit`` is the
    shortfall of the lower-bounded circulation, which additionally forces
    buyers whose best options exclude keeping money to spend everything.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    mu = np.asarray(mu, dtype=float)
    fam = relaxed_active_sets(inst, mu, 0.0)
    plain = build_network(inst, mu, fam)
    flow_value, plain_flows = max_flow(plain)
    total_price = float(np.exp(mu).sum())
    circ_value, required, circ, circ_flows = _circulation(inst, mu, fam)
    deficit = max(required - circ_value, total_price - flow_value, 0.0)
    optimal = bool(total_price - flow_value <= tol and required - circ_value <= tol)
    lam = _lam_from(inst, circ, circ_flows) if optimal else _lam_from(inst, plain, plain_flows)
    return Certificate(
        flow_value=float(flow_value),
        required=total_price,
        deficit=float(deficit),
        optimal=optimal,
        lam=lam,
        tol=tol,
        family=fam,
    )


# keep pytest from collecting the public name above as a test
test_optimality.__test__ = False


def exact_allocation(inst: MarketInstance, cert: Certificate, mu):
    """Equilibrium allocation ``x_ij = lam_ij / p_j``; returns ``(prices, x)``."""
    if not cert.optimal:
        raise NotCertified("candidate prices failed the optimality test")
    p = np.exp(np.asarray(mu, dtype=float))
    x = cert.lam[:, 1:] / p[None, :]
    return p, x
