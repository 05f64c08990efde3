import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fisherce import (
    DegenerateMatrix,
    DimensionMismatch,
    Kind,
    MarketInstance,
    NonpositiveBudget,
    eval_F,
    eval_F_delta,
    grad_F_delta,
    make_instance,
    price_bounds,
    project_box,
    subgrad_F,
    validate_instance,
)
from fisherce.market import smoothed_objective
from helpers import random_instance
from oracles import cvx_optimum

CROSS = [[2.0, 1.0], [1.0, 2.0]]


def test_validate_smallest_market():
    inst = MarketInstance(Kind.LINEAR, [[1.0]], [1.0])
    assert validate_instance(inst) is inst


def test_validate_rejects_zero_column():
    with pytest.raises(DegenerateMatrix):
        make_instance("linear", [[1, 0], [2, 0]], [1, 1])


def test_validate_rejects_zero_row():
    with pytest.raises(DegenerateMatrix):
        make_instance("linear", [[1, 1], [0, 0]], [1, 1])


def test_validate_rejects_nonpositive_budget():
    with pytest.raises(NonpositiveBudget):
        make_instance("linear", [[1, 1], [1, 2]], [1, -0.5])


@pytest.mark.parametrize("v, b", [([[1, 2]], [1, 1]), ([[1], [2]], [1]), ([[np.nan]], [1])])
def test_validate_dimension_errors(v, b):
    with pytest.raises(DimensionMismatch):
        make_instance("linear", v, b)


def test_instance_is_immutable_copy():
    v = np.array([[1.0, 2.0]])
    inst = make_instance("quasilinear", v, [1.0])
    v[0, 0] = 5.0
    assert inst.valuations[0, 0] == 1.0
    with pytest.raises(ValueError):
        inst.valuations[0, 0] = 3.0


def test_bounds_linear_single():
    b = price_bounds(make_instance("linear", [[1]], [1]))
    assert (b.p_lower, b.p_upper) == (1.0, 1.0)
    assert b.mu_lower == 0.0 and b.mu_upper == 0.0


def test_bounds_quasilinear_single():
    b = price_bounds(make_instance("quasilinear", [[1]], [1]))
    assert b.p_lower == 0.5 and b.p_upper == 1.0


def test_bounds_quasilinear_cross_contains_equilibrium():
    inst = make_instance("quasilinear", CROSS, [1, 1])
    b = price_bounds(inst)
    assert b.p_lower == pytest.approx(0.5, abs=1e-15)
    assert b.p_upper == 2.0
    _, mu = cvx_optimum(inst)
    assert np.allclose(np.exp(mu), 1.0, atol=1e-6)
    assert np.all((b.p_lower <= np.exp(mu)) & (np.exp(mu) <= b.p_upper))


def test_bounds_linear_upper_takes_larger_term():
    b = price_bounds(make_instance("linear", [[5.0, 1.0]], [1.0]))
    assert b.p_upper == 5.0
    b = price_bounds(make_instance("linear", [[0.1], [0.2]], [3.0, 4.0]))
    assert b.p_upper == 7.0


def test_eval_F_examples():
    assert eval_F(make_instance("linear", [[1]], [1]), [0.0]) == 1.0
    assert eval_F(make_instance("quasilinear", [[0.5]], [1]), [math.log(0.5)]) == pytest.approx(0.5, abs=1e-15)
    assert eval_F(make_instance("linear", CROSS, [1, 1]), [0, 0]) == pytest.approx(2 + 2 * math.log(2), abs=1e-12)


def test_eval_F_ignores_zero_valuations():
    inst = make_instance("linear", [[1.0, 0.0], [1.0, 1.0]], [1, 1])
    # buyer 0 only sees good 0
    assert eval_F(inst, [0.0, -5.0]) == pytest.approx(1 + math.exp(-5) + 0 + 5)


def test_eval_F_delta_examples():
    one = make_instance("linear", [[1]], [1])
    assert eval_F_delta(one, 1.0, [0.0]) == pytest.approx(1.0, abs=1e-15)
    pair = make_instance("linear", [[1, 1]], [1])
    mpmath.mp.dps = 40
    expected = float(2 + mpmath.mpf("0.5") * mpmath.log(2))
    assert expected == pytest.approx(2.3465736, abs=1e-7)
    assert eval_F_delta(pair, 0.5, [0.0, 0.0]) == pytest.approx(expected, rel=1e-15)


def _mp_F_delta(inst, delta, mu):
    mpmath.mp.dps = 50
    total = sum(mpmath.e ** mpmath.mpf(x) for x in mu)
    for i in range(inst.n):
        terms = [mpmath.e ** ((mpmath.log(inst.valuations[i, j]) - mu[j]) / mpmath.mpf(delta))
                 for j in range(inst.m) if inst.valuations[i, j] > 0]
        if inst.has_outside:
            terms.append(mpmath.mpf(1))
        total += inst.budgets[i] * delta * mpmath.log(mpmath.fsum(terms))
    return float(total)


@pytest.mark.parametrize("kind", ["linear", "quasilinear"])
def test_eval_F_delta_matches_high_precision(kind):
    rng = np.random.default_rng(7)
    for _ in range(10):
        inst = random_instance(rng, kind, 4, 3, sparsity=0.3)
        mu = rng.normal(size=3)
        delta = 10 ** rng.uniform(-3, 0)
        assert eval_F_delta(inst, delta, mu) == pytest.approx(_mp_F_delta(inst, delta, mu), rel=1e-12)


def test_eval_F_delta_stable_at_tiny_delta():
    inst = make_instance("linear", [[1e3, 1e-3]], [1.0])
    val = eval_F_delta(inst, 1e-9, [0.0, 0.0])
    assert math.isfinite(val)
    assert val == pytest.approx(eval_F(inst, [0.0, 0.0]), abs=1e-8)


def test_sandwich_random_triples():
    rng = np.random.default_rng(11)
    for _ in range(200):
        kind = "linear" if rng.uniform() < 0.5 else "quasilinear"
        n, m = rng.integers(1, 7, size=2)
        inst = random_instance(rng, kind, n, m, sparsity=0.2)
        mu = rng.normal(scale=2.0, size=m)
        delta = 10 ** rng.uniform(-6, 0)
        f, fd = eval_F(inst, mu), eval_F_delta(inst, delta, mu)
        slack = 1e-12 * (1 + abs(f))
        assert -slack <= fd - f <= delta * math.log(m + 1) * inst.total_budget + slack


def test_gradient_single_good_is_zero():
    g, w = grad_F_delta(make_instance("linear", [[1]], [1]), 0.3, [0.0])
    assert g[0] == pytest.approx(0.0, abs=1e-15)
    assert w.spend[0, 0] == 1.0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    for kind in ("linear", "quasilinear"):
        inst = random_instance(rng, kind, 6, 5)
        b = price_bounds(inst)
        for _ in range(10):
            mu = rng.uniform(b.mu_lower, b.mu_upper, size=5)
            delta = 0.5
            g, _ = grad_F_delta(inst, delta, mu)
            fd = np.empty(5)
            for j in range(5):
                hstep = 1e-6 * (1 + abs(mu[j]))
                e = np.zeros(5)
                e[j] = hstep
                fd[j] = (eval_F_delta(inst, delta, mu + e) - eval_F_delta(inst, delta, mu - e)) / (2 * hstep)
            worst = max(worst, float(np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-12)))
    assert worst <= 1e-5


def test_demand_weight_rows_sum_to_one():
    rng = np.random.default_rng(5)
    for kind in ("linear", "quasilinear"):
        inst = random_instance(rng, kind, 8, 6, sparsity=0.3)
        for delta in (1e-6, 1e-2, 1.0):
            _, w = grad_F_delta(inst, delta, rng.normal(size=6))
            rows = w.spend.sum(axis=1) / inst.budgets
            if inst.has_outside:
                rows = rows + w.outside
            assert np.allclose(rows, 1.0, atol=1e-12)
            assert (w.spend >= 0).all()
            assert w.shares.shape[1] == (7 if inst.has_outside else 6)


def test_gradient_limit_is_equal_split():
    inst = make_instance("linear", [[1, 1]], [1])
    g, _ = grad_F_delta(inst, 1e-9, [0.0, 0.0])
    assert np.allclose(g, subgrad_F(inst, [0.0, 0.0]), atol=1e-12)


def test_subgrad_examples():
    assert subgrad_F(make_instance("linear", [[1]], [1]), [0.0]) == pytest.approx([0.0])
    assert subgrad_F(make_instance("linear", [[1, 1]], [1]), [0.0, 0.0]) == pytest.approx([0.5, 0.5])


def test_subgrad_agrees_with_small_delta_gradient():
    rng = np.random.default_rng(9)
    for kind in ("linear", "quasilinear"):
        inst = random_instance(rng, kind, 6, 6)
        for _ in range(20):
            mu = rng.normal(size=6)
            g, _ = grad_F_delta(inst, 1e-9, mu)
            assert np.allclose(g, subgrad_F(inst, mu), atol=1e-6)


def test_project_box_examples():
    assert project_box([5.0], 0, 1).tolist() == [1.0]
    assert project_box([0.5], 0, 1).tolist() == [0.5]
    with pytest.raises(ValueError):
        project_box([0.0], 1, 0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8), st.floats(-10, 10), st.floats(0, 10))
def test_project_box_idempotent(mu, lo, width):
    once = project_box(mu, lo, lo + width)
    assert np.array_equal(project_box(once, lo, lo + width), once)
    assert np.all((once >= lo) & (once <= lo + width))


def _box_pairs(rng, inst, smooth, b, count):
    lo, hi = b.mu_lower - smooth.eta, b.mu_upper + smooth.eta
    for _ in range(count):
        yield rng.uniform(lo, hi, size=inst.m), rng.uniform(lo, hi, size=inst.m)


@pytest.mark.parametrize("kind", ["linear", "quasilinear"])
def test_strong_convexity_and_smoothness(kind):
    rng = np.random.default_rng(21)
    for _ in range(10):
        inst = random_instance(rng, kind, 5, 4, sparsity=0.2)
        b = price_bounds(inst)
        smooth = smoothed_objective(inst, b, 10 ** rng.uniform(-3, 0))
        for x, y in _box_pairs(rng, inst, smooth, b, 20):
            gx, _ = grad_F_delta(inst, smooth, x)
            gy, _ = grad_F_delta(inst, smooth, y)
            d = y - x
            lower = eval_F_delta(inst, smooth, x) + gx @ d + 0.5 * smooth.sigma * (d @ d)
            assert eval_F_delta(inst, smooth, y) >= lower - 1e-9
            assert np.linalg.norm(gx - gy) <= smooth.L * np.linalg.norm(d) * (1 + 1e-12)


def test_smoothed_constants():
    inst = make_instance("linear", CROSS, [1, 1])
    b = price_bounds(inst)
    s = smoothed_objective(inst, b, 0.01)
    assert s.L == math.exp(b.mu_upper + 1) + 2 / 0.01
    assert s.sigma == math.exp(b.mu_lower - 1)
    assert 0 < s.q < 1
