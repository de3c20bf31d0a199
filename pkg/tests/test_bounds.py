import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dtebounds.bounds import (
    BoundCurve,
    default_delta_grid,
    dote_bounds,
    fh_conditional,
    finalize_curve,
    invert_curve,
    joint_bounds,
    qote_bounds,
    wd_baseline,
    wd_conditional,
    wd_grid,
)
from dtebounds.distributions import StepDistribution, StepFamily, ecdf_fit
from dtebounds.exceptions import InsufficientDataError
from dtebounds.simulate import lp_coupling_oracle, wd_discrete

Y = np.linspace(-8, 8, 16001)


class ConstantFamily(StepFamily):
    """A conditional family that ignores its conditioning value."""

    def __init__(self, dist):
        self.dist = dist
        self.breakpoints = dist.support

    def at_breakpoints(self, cond):
        return np.tile(self.dist.cdf_values, (np.atleast_1d(cond).size, 1))


class ShiftFamily(StepFamily):
    """``F(y | c) = G(y - c)`` for a fixed step distribution ``G`` on a lattice."""

    def __init__(self, lattice, values, shifts):
        self.lattice = lattice
        self.values = values
        self.breakpoints = np.unique(np.add.outer(np.asarray(shifts), lattice).ravel())

    def at_breakpoints(self, cond):
        cond = np.atleast_1d(cond)
        G = StepDistribution(self.lattice, self.values)
        return G.cdf(self.breakpoints[None, :] - cond[:, None])


def test_fh_examples():
    assert fh_conditional(0.6, 0.7) == pytest.approx((0.3, 0.6))
    assert fh_conditional(0.2, 0.3) == pytest.approx((0.0, 0.2))
    assert fh_conditional(1.0, 1.0) == (1.0, 1.0)


def test_joint_bounds_single_value_is_the_conditional_surface():
    F1 = ConstantFamily(ecdf_fit([0.0, 1.0, 2.0]))
    F0 = ConstantFamily(ecdf_fit([0.5, 1.5]))
    grid1, grid0 = np.array([0.0, 1.0, 2.0]), np.array([0.5, 1.5])
    surf = joint_bounds(F1, F0, [3.0], grid1, grid0)
    lo, up = fh_conditional(F1(grid1, [3.0])[0][:, None], F0(grid0, [3.0])[0][None, :])
    np.testing.assert_allclose(surf.lower, lo)
    np.testing.assert_allclose(surf.upper, up)


def test_joint_bounds_equal_families():
    F = ConstantFamily(ecdf_fit(np.arange(10.0)))
    grid = np.arange(10.0)
    surf = joint_bounds(F, F, [0.0, 1.0], grid, grid)
    v = F.dist(grid)
    np.testing.assert_allclose(np.diag(surf.upper), v)
    np.testing.assert_allclose(np.diag(surf.lower), np.maximum(2 * v - 1, 0))


def test_joint_bounds_normal_independence_matches_marginal_fh():
    x = stats.norm.ppf((np.arange(4000) + 0.5) / 4000)
    F = ConstantFamily(ecdf_fit(x))
    grid = np.linspace(-2, 2, 9)
    cond = np.linspace(-1, 1, 25)
    surf = joint_bounds(F, F, cond, grid, grid)
    lo, up = fh_conditional(stats.norm.cdf(grid)[:, None], stats.norm.cdf(grid)[None, :])
    assert np.abs(surf.lower - lo).max() < 1e-3
    assert np.abs(surf.upper - up).max() < 1e-3


def test_joint_bounds_need_conditioning_values():
    F = ConstantFamily(ecdf_fit([1.0]))
    with pytest.raises(InsufficientDataError):
        joint_bounds(F, F, [], [1.0], [1.0])


def test_wd_identical_marginals_at_zero():
    assert wd_grid(stats.norm.cdf, stats.norm.cdf, 0.0, Y) == (0.0, 1.0)


def test_wd_identical_discrete_marginals_keep_one_atom():
    # the top atom of Y0 must meet some Y1 at or below it
    x = np.random.default_rng(0).normal(size=50)
    F = ecdf_fit(x)
    assert wd_conditional(F, F, 0.0) == pytest.approx((0.02, 1.0))
    probs = np.full(50, 0.02)
    probs[-1] = 1 - probs[:-1].sum()
    assert lp_coupling_oracle(x, probs, x, probs, 0.0) == pytest.approx((0.02, 1.0), abs=1e-9)


def test_wd_point_masses():
    a = StepDistribution(np.array([2.0]), np.array([1.0]))
    b = StepDistribution(np.array([0.5]), np.array([1.0]))
    for delta in (1.0, 1.5, 2.0):
        assert wd_conditional(a, b, delta) == (float(1.5 <= delta),) * 2


def test_wd_normal_shift_on_a_grid():
    lo, up = wd_grid(lambda y: stats.norm.cdf(y - 1), stats.norm.cdf, 0.0, Y)
    assert lo == 0.0
    assert up == pytest.approx(1 - (stats.norm.cdf(0.5) - stats.norm.cdf(-0.5)), abs=1e-6)


def test_wd_standard_normals_at_one():
    lo, up = wd_grid(stats.norm.cdf, stats.norm.cdf, 1.0, Y)
    assert lo == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-6)
    assert up == 1.0


def test_wd_shifted_copy():
    base = np.random.default_rng(1).normal(size=30)
    F1, F0 = ecdf_fit(base + 2.0), ecdf_fit(base)
    assert wd_conditional(F1, F0, 2.0) == pytest.approx((1 / 30, 1.0))
    assert wd_conditional(F1, F0, 2.0 - 1e-6)[0] == 0.0
    assert wd_conditional(F1, F0, 2.0 - 1e-6)[1] < 1.0


def test_wd_decimal_ties_are_not_lost_to_rounding():
    F1 = ecdf_fit([18.4])
    F0 = ecdf_fit([18.3, 20.0])
    # 18.3 + 0.1 != 18.4 in binary floating point
    assert wd_conditional(F1, F0, 0.1) == (1.0, 1.0)
    assert wd_conditional(F1, F0, 18.4 - 18.3) == (1.0, 1.0)
    assert wd_conditional(F1, F0, 0.09) == (0.5, 0.5)


def test_wd_grid_needs_two_points():
    with pytest.raises(ValueError):
        wd_grid(stats.norm.cdf, stats.norm.cdf, 0.0, [0.0])


def test_lp_oracle_examples():
    assert lp_coupling_oracle([1.0], [1.0], [0.0], [1.0], 0.5) == (0.0, 0.0)
    lo, hi = lp_coupling_oracle([0.0, 1.0], [0.5, 0.5], [0.0, 1.0], [0.5, 0.5], 0.0)
    assert lo == pytest.approx(0.5) and hi == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lp_coupling_oracle([0.0], [0.9], [0.0], [1.0], 0.0)


@given(st.integers(0, 2**31 - 1))
def test_wd_step_formula_matches_the_coupling_lp(seed):
    rng = np.random.default_rng(seed)
    k1, k0 = rng.integers(1, 6, size=2)
    a1 = rng.choice(np.arange(-6, 7), k1, replace=False).astype(float)
    a0 = rng.choice(np.arange(-6, 7), k0, replace=False).astype(float)
    p1, p0 = rng.dirichlet(np.ones(k1)), rng.dirichlet(np.ones(k0))
    p1[-1] = 1 - p1[:-1].sum()
    p0[-1] = 1 - p0[:-1].sum()
    delta = float(rng.integers(-8, 9))
    assert np.allclose(wd_discrete(a1, p1, a0, p0, delta),
                       lp_coupling_oracle(a1, p1, a0, p0, delta), atol=1e-9)


def test_dote_single_value_equals_conditional_curve():
    lattice = np.arange(5.0)
    values = np.array([0.1, 0.3, 0.6, 0.8, 1.0])
    F1 = ShiftFamily(lattice, values, [0.0, 1.0])
    F0 = ConstantFamily(ecdf_fit([0.0, 2.0, 3.0]))
    delta = np.linspace(-5, 6, 23)
    curve = dote_bounds(F1, F0, [1.0], delta)
    G1 = StepDistribution(lattice + 1.0, values)
    ref = np.array([wd_conditional(G1, F0.dist, d) for d in delta])
    np.testing.assert_allclose(curve.lower, ref[:, 0])
    np.testing.assert_allclose(curve.upper, ref[:, 1])


def test_dote_independent_conditionals_equal_the_baseline():
    rng = np.random.default_rng(2)
    F1, F0 = ecdf_fit(rng.normal(1, 1, 80)), ecdf_fit(rng.normal(0, 2, 60))
    delta = np.linspace(-6, 8, 57)
    curve = dote_bounds(ConstantFamily(F1), ConstantFamily(F0), rng.normal(size=40), delta)
    base = wd_baseline(F1, F0, delta)
    np.testing.assert_allclose(curve.lower, base.lower, atol=1e-6)
    np.testing.assert_allclose(curve.upper, base.upper, atol=1e-6)


def test_dote_averages_with_weights():
    lattice = np.arange(4.0)
    values = np.array([0.25, 0.5, 0.75, 1.0])
    F1 = ShiftFamily(lattice, values, [0.0, 2.0])
    F0 = ConstantFamily(ecdf_fit([0.0, 1.0]))
    delta = np.linspace(-3, 6, 19)
    mixed = dote_bounds(F1, F0, [0.0, 2.0], delta, weights=[0.25, 0.75])
    a = dote_bounds(F1, F0, [0.0], delta)
    b = dote_bounds(F1, F0, [2.0], delta)
    np.testing.assert_allclose(mixed.lower, 0.25 * a.lower + 0.75 * b.lower)
    np.testing.assert_allclose(mixed.upper, 0.25 * a.upper + 0.75 * b.upper)


@given(st.integers(0, 2**31 - 1))
def test_curves_are_valid(seed):
    rng = np.random.default_rng(seed)
    F1 = ecdf_fit(rng.normal(size=rng.integers(1, 30)))
    F0 = ecdf_fit(rng.normal(size=rng.integers(1, 30)))
    delta = default_delta_grid(F1.support, F0.support, 41)
    curve = wd_baseline(F1, F0, delta)
    assert curve.check() == []
    assert curve.upper[-1] == 1.0


def test_baseline_curve_ends():
    rng = np.random.default_rng(3)
    F1, F0 = ecdf_fit(rng.normal(size=50)), ecdf_fit(rng.normal(size=50))
    delta = np.linspace(-20, 20, 81)
    curve = wd_baseline(F1, F0, delta)
    assert curve.lower[0] == 0.0 and curve.upper[0] == 0.0
    assert curve.lower[-1] == 1.0 and curve.upper[-1] == 1.0


def test_finalize_curve_records_rearrangement():
    curve = finalize_curve(np.arange(3.0), np.array([0.2, 0.1, 0.5]), np.array([0.5, 0.6, 0.9]))
    np.testing.assert_allclose(curve.lower, [0.1, 0.2, 0.5])
    assert curve.meta["rearrangement_shift"] == pytest.approx(0.1)
    assert curve.meta["rearrangement_flag"]


def test_qote_step_inversion():
    delta = np.linspace(-5, 5, 101)
    step = (delta >= 2).astype(float)
    curve = BoundCurve(delta, np.zeros_like(delta), step)
    q = qote_bounds(curve, [0.1, 0.5, 0.9])
    np.testing.assert_allclose(q.lower, 2.0)
    assert np.all(np.isinf(q.upper)) and np.all(q.upper_flag == 1)


def test_qote_point_identified_is_the_quantile_function():
    F = ecdf_fit(np.random.default_rng(4).normal(size=40))
    delta = F.support
    curve = BoundCurve(delta, F.cdf_values, F.cdf_values)
    tau = np.linspace(0.05, 0.95, 19)
    q = qote_bounds(curve, tau)
    np.testing.assert_array_equal(q.lower, F.quantile(tau))
    np.testing.assert_array_equal(q.upper, F.quantile(tau))


def test_qote_below_grid_flag():
    delta = np.linspace(0, 1, 11)
    lo, flag = invert_curve(delta, np.full(11, 0.5), [0.2, 0.7])
    assert lo[0] == -np.inf and flag[0] == -1
    assert lo[1] == np.inf and flag[1] == 1


def test_qote_rejects_tau_outside_unit_interval():
    curve = BoundCurve(np.arange(2.0), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        qote_bounds(curve, [0.0])


@given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.floats(0.01, 0.99))
def test_qote_dote_galois_round_trip(values, tau):
    curve = np.sort(np.asarray(values))
    delta = np.arange(curve.size, dtype=float)
    q, flag = invert_curve(delta, curve, np.array([tau]))
    if flag[0] == 1:
        assert curve[-1] < tau
    elif flag[0] == -1:
        assert curve[0] > tau
    else:
        i = int(q[0])
        assert curve[i] >= tau
        assert i == 0 or curve[i - 1] < tau
