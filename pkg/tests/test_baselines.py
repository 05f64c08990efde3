import math

import numpy as np
import pytest

from fisherce import BaselineConfig, make_instance, price_bounds, proportional_response_solve, tatonnement_solve
from fisherce.baselines import Algo, initial_bids
from helpers import random_instance
from oracles import cvx_optimum

CROSS = [[2.0, 1.0], [1.0, 2.0]]
F_CROSS = 2 + 2 * math.log(2)


def tat_cfg(step=1e-4, iters=10_000_000):
    return BaselineConfig("tat", step, max_iters=iters)


def pr_cfg(step=1.0, iters=10_000_000):
    return BaselineConfig("pr", step, max_iters=iters)


def test_config_defaults_and_validation():
    assert BaselineConfig("tat").stepsize == 1e-4
    assert BaselineConfig(Algo.PROPORTIONAL_RESPONSE).stepsize == 1.0
    with pytest.raises(ValueError):
        BaselineConfig("tat", 0.0)
    with pytest.raises(ValueError):
        BaselineConfig("pr", 1.5)


def test_tatonnement_fixed_point():
    inst = make_instance("linear", [[1]], [1])
    rep = tatonnement_solve(inst, None, tat_cfg(0.1, 50), p0=[1.0])
    assert rep.prices[0] == 1.0
    assert rep.iterations == 50 and rep.max_iters_exceeded


def _equal_split_demand(inst, p):
    lv = np.log(np.where(inst.support, inst.valuations, 1.0))
    s = np.where(inst.support, lv - np.log(p)[None, :], -np.inf)
    h = s.max(axis=1)
    if inst.has_outside:
        h = np.maximum(h, 0.0)
    best = s >= (h - 1e-12 * (1 + np.abs(h)))[:, None]
    keep = (h <= 1e-12) if inst.has_outside else np.zeros(inst.n, bool)
    share = inst.budgets / (best.sum(axis=1) + keep)
    return (best * share[:, None]).sum(axis=0)


def test_tatonnement_moves_toward_equilibrium():
    inst = make_instance("linear", CROSS, [1, 1])
    p = np.array([1.2, 0.8])
    dist = np.linalg.norm(p - 1.0)
    for _ in range(100):
        p = tatonnement_solve(inst, None, tat_cfg(1e-2, 1), p0=p).prices
        d = np.linalg.norm(p - 1.0)
        assert d < dist
        dist = d


@pytest.mark.parametrize("kind", ["linear", "quasilinear"])
def test_tatonnement_sign_property(kind):
    rng = np.random.default_rng(0)
    inst = random_instance(rng, kind, 6, 5)
    b = price_bounds(inst)
    for _ in range(20):
        p0 = np.exp(rng.uniform(b.mu_lower, b.mu_upper, size=5))
        p1 = tatonnement_solve(inst, b, tat_cfg(1e-3, 1), p0=p0).prices
        excess = _equal_split_demand(inst, p0) - p0
        assert np.allclose(p1 - p0, 1e-3 * excess, rtol=1e-9, atol=1e-15)
        moved = np.abs(p1 - p0) > 0
        assert np.all(np.sign(p1 - p0)[moved] == np.sign(excess)[moved])


def test_tatonnement_stays_in_inflated_box():
    inst = make_instance("linear", CROSS, [1, 1])
    b = price_bounds(inst)
    rep = tatonnement_solve(inst, b, tat_cfg(50.0, 20), p0=[1.0, 1.9])
    assert np.all(rep.prices >= b.p_lower / math.e - 1e-15)
    assert np.all(rep.prices <= b.p_upper * math.e + 1e-15)


def test_pr_fixed_point():
    inst = make_instance("linear", [[1]], [1])
    rep = proportional_response_solve(inst, pr_cfg(iters=20))
    assert rep.info["bids"][0, 0] == 1.0
    assert rep.prices[0] == 1.0


def test_pr_on_cross_instance():
    inst = make_instance("linear", CROSS, [1, 1])
    # the proportional first bids already price both goods at 1
    gap100 = proportional_response_solve(inst, pr_cfg(1.0, 100)).f_value - F_CROSS
    rep = proportional_response_solve(inst, pr_cfg(1.0, 1000))
    assert 0 <= rep.f_value - F_CROSS <= gap100 <= 1e-12
    assert np.allclose(rep.prices, 1.0, atol=1e-12)


@pytest.mark.parametrize("kind", ["linear", "quasilinear"])
def test_pr_gap_shrinks(kind):
    rng = np.random.default_rng(12)
    inst = random_instance(rng, kind, 4, 4)
    f_star, _ = cvx_optimum(inst)
    gap100 = proportional_response_solve(inst, pr_cfg(1.0, 100)).f_value - f_star
    gap1000 = proportional_response_solve(inst, pr_cfg(1.0, 1000)).f_value - f_star
    assert -1e-9 <= gap1000 < gap100


@pytest.mark.parametrize("kind", ["linear", "quasilinear"])
@pytest.mark.parametrize("step", [1.0, 0.3])
def test_pr_budget_conservation(kind, step):
    rng = np.random.default_rng(1)
    inst = random_instance(rng, kind, 5, 4, sparsity=0.3)
    for t in range(0, 40):
        rep = proportional_response_solve(inst, pr_cfg(step, t))
        spent = rep.info["bids"].sum(axis=1)
        if inst.has_outside:
            spent = spent + rep.info["outside_bids"]
        assert np.allclose(spent, inst.budgets, rtol=0, atol=1e-12)
        assert np.all(rep.info["bids"][~inst.support] == 0)


def test_pr_initial_bids():
    inst = make_instance("quasilinear", [[1.0, 3.0]], [2.0])
    bids, keep = initial_bids(inst)
    assert bids.tolist() == [[0.4, 1.2]]
    assert keep.tolist() == [0.4]


@pytest.mark.parametrize("kind", ["linear", "quasilinear"])
def test_both_reach_small_gap_on_cross_instance(kind):
    inst = make_instance(kind, CROSS, [1, 1])
    # both kinds share the optimum mu = 0
    f_star = F_CROSS
    tat = tatonnement_solve(inst, None, tat_cfg(), 1e-4, f_star)
    pr = proportional_response_solve(inst, pr_cfg(), 1e-4, f_star)
    for rep in (tat, pr):
        assert rep.status == "target"
        assert rep.f_value - f_star <= 1e-4


def test_trace_has_objective_column():
    inst = make_instance("linear", CROSS, [1, 1])
    rep = tatonnement_solve(inst, None, tat_cfg(1e-2, 30), trace=True)
    assert rep.trace.shape == (31, 3)
    rep = proportional_response_solve(inst, pr_cfg(1.0, 30), trace=True)
    assert rep.trace.shape == (31, 3)
    assert np.all(np.isfinite(rep.trace[:, 1]))
