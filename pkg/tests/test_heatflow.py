import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from nematic import GridSpec, ScalarField, TensorField
from nematic import heatflow
from nematic.field import lp_norm
from nematic.heatflow import HeatApplyPlan, apply_heat, gaussian_samples


def dipole(grid, s0):
    """x1 Phi(x, s0): odd in x1, so its integral vanishes."""
    x, _, _ = grid.mesh()
    return ScalarField(grid, x * gaussian_samples(grid, s0))


def test_heat_kernel_examples(oracle):
    assert heatflow.heat_kernel([0.0, 0.0, 0.0], 1.0 / (4 * math.pi)) == pytest.approx(1.0)
    assert heatflow.phi1([0.0, 0.0, 0.0], 0.0) == pytest.approx(oracle["phi1_origin_t0"], rel=1e-14)
    with pytest.raises(ValueError):
        heatflow.heat_kernel([0.0, 0.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        heatflow.phi1([0.0, 0.0, 0.0], -0.1)


def test_heat_kernel_unit_mass():
    g = GridSpec(64, 40.0)
    assert float(gaussian_samples(g, 2.0).sum() * g.cell_volume) == pytest.approx(1.0, abs=1e-8)


def test_plan_symbol_properties():
    g = GridSpec(16, 8.0)
    plan = HeatApplyPlan(g)
    sym = plan.symbol(0.7)
    assert sym[0, 0, 0] == 1.0
    assert np.all(sym > 0) and np.all(sym <= 1)
    with pytest.raises(ValueError):
        plan.symbol(-1.0)


def test_apply_heat_identity_and_gaussian():
    g = GridSpec(64, 48.0)
    f = ScalarField(g, gaussian_samples(g, 1.0))
    assert np.array_equal(apply_heat(f, 0.0).values, f.values)
    out = apply_heat(f, 5.0)
    assert out.time_tag == 5.0
    assert np.max(np.abs(out.values - gaussian_samples(g, 6.0))) < 1e-8


@settings(max_examples=20)
@given(st.floats(0, 10), st.floats(0, 10))
def test_semigroup(s, t):
    g = GridSpec(16, 10.0)
    plan = HeatApplyPlan(g)
    f = TensorField(g, np.random.default_rng(3).normal(size=(5,) + g.shape))
    two = plan.apply(plan.apply(f, s), t)
    one = plan.apply(f, s + t)
    assert np.max(np.abs(two.values - one.values)) < 1e-12


def test_contraction_and_mean(rng):
    g = GridSpec(16, 10.0)
    f = TensorField(g, rng.normal(size=(5,) + g.shape))
    out = apply_heat(f, 0.8)
    for p in (1, 2, math.inf):
        assert lp_norm(out, p) <= lp_norm(f, p) * (1 + 1e-12)
    assert np.allclose(out.integral(), f.integral(), atol=1e-10)


def test_zero_mean_residual_of_gaussian():
    # u0 = Phi(., 1): the residual is Phi(., t+1) - Phi(., t) * int u0
    g = GridSpec(64, 48.0)
    u0 = ScalarField(g, gaussian_samples(g, 1.0))
    for t in (1.0, 4.0):
        res = heatflow.zero_mean_residual(u0, t)
        expected = gaussian_samples(g, t + 1.0) - gaussian_samples(g, t) * u0.integral()
        assert np.max(np.abs(res.values - expected)) < 1e-8
    with pytest.raises(ValueError):
        heatflow.zero_mean_residual(u0, 0.0)


def test_odd_data_sup_decay():
    # sup |m(., t)| ~ (t + s0)^-2, so the fitted rate over t in [5, 50] is -2 t/(t + s0) on average
    g = GridSpec(64, 64.0)
    u0 = dipole(g, 0.25)
    assert abs(u0.integral()) < 1e-14
    times = np.geomspace(5, 50, 8)
    plan = HeatApplyPlan(g)
    sups = [np.max(np.abs(heatflow.zero_mean_residual(u0, t, plan).values)) for t in times]
    slope = np.polyfit(np.log(times), np.log(sups), 1)[0]
    assert slope <= -2 + 0.05


def test_odd_data_l2_decay():
    g = GridSpec(64, 64.0)
    # ||m(., t)||_2 ~ (t + s0)^(-5/4); the fitted exponent must beat -1.15
    u0 = dipole(g, 0.25)
    times = np.geomspace(4, 40, 8)
    plan = HeatApplyPlan(g)
    norms = [lp_norm(heatflow.zero_mean_residual(u0, t, plan), 2) for t in times]
    slope = np.polyfit(np.log(times), np.log(norms), 1)[0]
    assert slope <= -1.15


def test_decay_bound_fit_small():
    g = GridSpec(32, 32.0)
    u0 = dipole(g, 1.0)
    times = [1.0, 3.0, 9.0]
    rng = np.random.default_rng(0)
    probes = np.column_stack([rng.integers(0, 3, 200), rng.integers(0, 32, (200, 3))])
    fit = heatflow.fit_decay_constant(u0, times, probes)
    assert np.isfinite(fit["C"]) and fit["C"] > 0
    assert np.all(fit["ratios"] <= fit["C"])


def test_mineineq_examples(oracle):
    assert heatflow.mineineq_check(3.0, 0.0, 1.0) == (0.0, 0.0)
    lhs, rhs = heatflow.mineineq_check(0.0, 1.0, 1.0)
    assert lhs == pytest.approx(oracle["mineineq_X0_Y1"], rel=1e-12)
    assert rhs == 2.0
    lhs, rhs = heatflow.mineineq_check(10.0, 1.0, 2.0)
    assert lhs < math.exp(-81) * 1.01
    assert rhs == pytest.approx(oracle["mineineq_X10_Y1_rhs"])
    with pytest.raises(ValueError):
        heatflow.mineineq_check(-1.0, 1.0, 1.0)


def explicit_constant(beta):
    # X <= Y gives C = 1; X = Y + d gives C = sup_d exp(-d^2)(1 + d)^beta
    res = optimize.minimize_scalar(lambda d: -math.exp(-d * d) * (1 + d) ** beta, bounds=(0, 10), method="bounded")
    return max(1.0, -res.fun)


@settings(max_examples=60)
@given(st.floats(0, 30), st.floats(0, 30), st.sampled_from([0.5, 1.0, 2.0, 4.0]))
def test_mineineq_holds_with_explicit_constant(X, Y, beta):
    lhs, rhs = heatflow.mineineq_check(X, Y, beta)
    assert lhs <= explicit_constant(beta) * rhs * (1 + 1e-9) + 1e-300


def test_kernel_difference_examples(oracle):
    diff, bound = heatflow.kernel_difference_bound_check([0.0, 0.0, 0.0], 1.0)
    assert diff == pytest.approx(oracle["kernel_diff_x0_t1"], rel=1e-12)
    assert bound == pytest.approx(oracle["kernel_bound_x0_t1"], rel=1e-12)
    assert diff <= bound
    with pytest.raises(ValueError):
        heatflow.kernel_difference_bound_check([0.0, 0.0, 0.0], 0.5)


def test_kernel_difference_tail_and_rate():
    for t in (1.0, 10.0, 100.0):
        x = np.array([10 * math.sqrt(t), 0.0, 0.0])
        diff, bound = heatflow.kernel_difference_bound_check(x, t)
        assert diff <= bound
    ts = np.geomspace(100, 10000, 6)
    diffs = [heatflow.kernel_difference_bound_check([0.0, 0.0, 0.0], t)[0] for t in ts]
    assert np.polyfit(np.log(ts), np.log(diffs), 1)[0] == pytest.approx(-2.5, abs=0.02)
