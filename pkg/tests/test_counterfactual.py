import numpy as np
import pytest
from scipy import stats

from dtebounds.counterfactual import (
    CicSpec,
    GceSpec,
    cic_marginal,
    default_recovery,
    gce_conditional_marginal,
    lagged_joint,
    parse_model,
    resolve_gce,
)
from dtebounds.distributions import StepDistribution, dr_fit, ecdf_fit
from dtebounds.exceptions import ConfigError
from dtebounds.panel import all_patterns

# a known N(0, 1) marginal without sampling noise
NORMAL_GRID = stats.norm.ppf((np.arange(20000) + 0.5) / 20000)


def _gaussian_pairs(rho, n, seed):
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], n)
    return np.exp(z[:, 0]), 3 + 2 * z[:, 1]  # response, conditioning


@pytest.mark.parametrize("target, recovery", [
    ((1, 1, 1), (1, 0, 1)),
    ((0, 0, 1), (0, 0, 1)),
    ((1, 1, 0), (1, 1, 0)),
    ((0, 0, 0), (0, 1, 0)),
])
def test_documented_model1_recoveries(target, recovery):
    spec = resolve_gce(1, target)
    assert spec.recovery == recovery
    assert not spec.extrapolated


def test_model2_flips_the_last_period():
    for target in all_patterns(3):
        spec = resolve_gce(2, target)
        assert spec.recovery == target[:2] + (1 - target[2],)
        assert spec.pair_columns == (1, 2)


def test_undocumented_model1_targets_are_flagged():
    spec = resolve_gce(1, (0, 1, 1))
    assert spec.extrapolated
    assert spec.as_dict()["extrapolated_recovery"] is True


def test_overrides_replace_the_resolver():
    spec = resolve_gce("II", "111", {"111": "110"})
    assert spec.overridden and spec.recovery == (1, 1, 0)


def test_invalid_recovery_is_config_error():
    with pytest.raises(ConfigError):
        GceSpec(1, (1, 1, 1), (0, 0, 0))
    with pytest.raises(ConfigError):
        resolve_gce(2, "111", {"111": "111"})


def test_parse_model_spellings():
    assert parse_model("i") == parse_model(1) == 1
    assert parse_model("GCE-II") == 2
    with pytest.raises(ConfigError):
        parse_model(3)
    assert default_recovery(1, (1, 1, 1)) == (1, 0, 1)


def test_cic_control_flips_last_period():
    assert CicSpec.for_target((1, 1, 1)).control == (1, 1, 0)


def test_cic_identical_lagged_groups_return_control_last():
    # exact whenever the control's levels lie in the range of the lagged ECDF
    rng = np.random.default_rng(0)
    prev = ecdf_fit(rng.normal(size=300))
    last = ecdf_fit(rng.normal(1, 2, size=150))
    out = cic_marginal(prev, prev, last)
    np.testing.assert_array_equal(out.support, last.support)
    np.testing.assert_allclose(out.cdf_values, last.cdf_values, atol=1e-12)


def test_cic_uniform_composition():
    rng = np.random.default_rng(1)
    y = np.linspace(0, 2, 201)
    gaps = []
    for n in (1000, 100_000):
        out = cic_marginal(ecdf_fit(rng.uniform(0, 1, n)), ecdf_fit(rng.uniform(0, 2, n)),
                           ecdf_fit(rng.uniform(0, 2, n)))
        gaps.append(np.abs(out(y) - np.minimum(y, 1)).max())
    assert gaps[1] < gaps[0] / 3
    assert gaps[1] < 0.02


def test_cic_point_mass_control():
    prev_t = ecdf_fit([1.0, 2.0, 3.0, 4.0])
    prev_c = ecdf_fit([10.0, 20.0])
    out = cic_marginal(prev_t, prev_c, StepDistribution(np.array([5.0]), np.array([1.0])))
    assert out.is_point_mass() and out.support[0] == 5.0


def test_cic_output_is_a_distribution():
    rng = np.random.default_rng(2)
    out = cic_marginal(ecdf_fit(rng.normal(size=30)), ecdf_fit(rng.normal(size=40)),
                       ecdf_fit(rng.normal(size=50)))
    assert np.all(np.diff(out.cdf_values) >= 0)
    assert out.cdf_values[-1] == 1.0


def test_independent_recovery_collapses_to_the_marginal():
    # one threshold per support point and levels of F0 inside the range of the
    # recovery ECDF make F(F^-1(u)) = u exact
    rng = np.random.default_rng(3)
    resp, cond = rng.normal(size=(2, 300))
    rec = dr_fit(resp, np.zeros(300), grid_size=300)
    F0 = ecdf_fit(rng.normal(size=150))
    Ft = ecdf_fit(rng.normal(size=80))
    cf = gce_conditional_marginal(resolve_gce(1, "111"), F0, Ft, rec, ecdf_fit(resp),
                                  ecdf_fit(cond))
    y = np.concatenate([F0.support, F0.support - 1e-9, [-10.0, 10.0]])
    out = cf(y, np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_allclose(out, np.broadcast_to(F0(y), out.shape), atol=1e-12)


def test_comonotone_recovery_gives_indicator():
    rng = np.random.default_rng(4)
    x = rng.normal(size=3000)
    rec = dr_fit(np.exp(x), 2 * x, grid_size=100)
    F0 = ecdf_fit(NORMAL_GRID)
    Ft = ecdf_fit(NORMAL_GRID)
    cf = gce_conditional_marginal(resolve_gce(2, "111"), F0, Ft, rec, ecdf_fit(np.exp(x)),
                                  ecdf_fit(2 * x))
    y0 = np.linspace(-2, 2, 81)
    cond = np.array([-1.0, 0.0, 1.0])
    ind = (F0(y0)[None, :] >= Ft(cond)[:, None]).astype(float)
    far = np.abs(y0[None, :] - cond[:, None]) > 0.15
    assert np.abs(cf(y0, cond) - ind)[far].max() < 0.05


def test_gaussian_recovery_matches_conditional_normal():
    # the step convention costs up to one threshold spacing, so 200 thresholds
    resp, cond = _gaussian_pairs(0.5, 10_000, 5)
    rec = dr_fit(resp, cond, grid_size=200, link="probit")
    F = ecdf_fit(NORMAL_GRID)
    cf = gce_conditional_marginal(resolve_gce(1, "111"), F, F, rec, ecdf_fit(resp),
                                  ecdf_fit(cond))
    y0 = np.linspace(-2, 2, 81)
    c = np.array([-1.0, 0.0, 1.0])
    ref = stats.norm.cdf((y0[None, :] - 0.5 * c[:, None]) / np.sqrt(0.75))
    assert np.abs(cf(y0, c) - ref).max() <= 0.02


def test_conditional_is_monotone_in_y0():
    resp, cond = _gaussian_pairs(0.3, 500, 6)
    rec = dr_fit(resp, cond, grid_size=50)
    rng = np.random.default_rng(6)
    cf = gce_conditional_marginal(resolve_gce(1, "111"), ecdf_fit(rng.normal(size=200)),
                                  ecdf_fit(rng.normal(size=200)), rec, ecdf_fit(resp),
                                  ecdf_fit(cond))
    vals = cf(np.linspace(-4, 4, 200), np.linspace(-2, 2, 9))
    assert np.all(np.diff(vals, axis=1) >= 0)


def test_gce_conditional_needs_a_spec():
    F = ecdf_fit([1.0, 2.0])
    with pytest.raises(ConfigError):
        gce_conditional_marginal(None, F, F, None, F, F)


def test_lagged_joint_independence_is_product():
    rng = np.random.default_rng(7)
    resp, cond = rng.normal(size=(2, 20_000))
    F = ecdf_fit(NORMAL_GRID)
    grid = np.linspace(-2, 2, 21)
    joint = lagged_joint(resolve_gce(1, "111"), F, F, resp, cond, grid, grid)
    prod = np.outer(F(grid), F(grid))
    assert np.abs(joint.values - prod).max() < 0.01


def test_lagged_joint_comonotone_is_upper_frechet():
    x = np.random.default_rng(8).normal(size=2000)
    F = ecdf_fit(NORMAL_GRID)
    grid = np.linspace(-2, 2, 21)
    joint = lagged_joint(resolve_gce(2, "111"), F, F, x, 5 * x + 1, grid, grid)
    upper = np.minimum.outer(F(grid), F(grid))
    assert np.abs(joint.values - upper).max() < 1e-3


def test_lagged_joint_gaussian_matches_bivariate_normal():
    resp, cond = _gaussian_pairs(0.5, 10_000, 9)
    F = ecdf_fit(NORMAL_GRID)
    grid = np.linspace(-2, 2, 17)
    joint = lagged_joint(resolve_gce(1, "111"), F, F, resp, cond, grid, grid)
    mvn = stats.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]])
    ref = np.array([[mvn.cdf([a, b]) for b in grid] for a in grid])
    assert np.abs(joint.values - ref).max() <= 0.02
