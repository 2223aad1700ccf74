import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stiefel_relu.data import ShiftSpec, standardize_shift
from stiefel_relu.errors import DegenerateFeature, NonMonotoneWidths, NonpositiveSigma, UnsupportedDistribution
from stiefel_relu.initializers import InitializerSpec, generate_alg2, make_rng
from stiefel_relu.nn import Mlp, build_mlp, mlp_widths
from stiefel_relu.propagation import (
    InputDistribution,
    clt_distance,
    dead_unit_fraction,
    empirical_transport,
    ks_statistic,
    norm_cdf,
    propagate_theory,
    rectified_moments,
    sampled_propagation,
)

# (mean, variance) of max(0, N(mu, sigma^2)) by adaptive quadrature of the density
QUADRATURE = {
    (0, 1): (0.39894228040143276, 0.34084505690810474),
    (1, 1): (1.0833154705876864, 0.751087807841609),
    (2, 1): (2.00849070261683, 0.9601963707872336),
    (-1, 2): (0.39559311480261206, 0.682063127622103),
    (3, 0.5): (3.000000000078179, 0.24999999951881513),
    (-5, 1): (5.3461655338328185e-08, 1.934329232940458e-08),
}


@pytest.mark.parametrize("mu,sigma", list(QUADRATURE))
def test_rectified_moments_quadrature(mu, sigma):
    mean, var = QUADRATURE[mu, sigma]
    got = rectified_moments(mu, sigma)
    assert got.mean == pytest.approx(mean, rel=1e-9, abs=1e-15)
    assert got.variance == pytest.approx(var, rel=1e-7, abs=1e-15)


def test_rectified_moments_standard():
    got = rectified_moments(0.0, 1.0)
    assert got.mean == pytest.approx(1 / np.sqrt(2 * np.pi), abs=1e-15)
    assert got.variance == pytest.approx(0.5 - 1 / (2 * np.pi), abs=1e-15)


def test_rectified_moments_saturated():
    up = rectified_moments(50.0, 1.0)
    assert abs(up.mean - 50) < 1e-6 and abs(up.variance - 1) < 1e-6
    down = rectified_moments(-50.0, 1.0)
    assert abs(down.mean) < 1e-6 and abs(down.variance) < 1e-6


@pytest.mark.parametrize("sigma", [0.0, -1.0, np.nan])
def test_rectified_moments_sigma(sigma):
    with pytest.raises(NonpositiveSigma):
        rectified_moments(0.0, sigma)


@settings(max_examples=200)
@given(mu=st.floats(-30, 30), sigma=st.floats(0.01, 10), d=st.floats(0.01, 5))
def test_rectified_moment_properties(mu, sigma, d):
    a, b = rectified_moments(mu, sigma), rectified_moments(mu + d, sigma)
    assert b.mean >= a.mean
    assert a.variance <= sigma * sigma * (1 + 1e-12)


def test_variance_ratio_tends_to_one():
    ratios = [rectified_moments(a, 1.0).variance for a in (1, 2, 4, 8)]
    assert all(x < y for x, y in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(1.0, abs=1e-12)


def test_norm_cdf_tails():
    assert norm_cdf(50.0) == 1.0
    assert 0 < norm_cdf(-37.0) < 1e-290
    assert norm_cdf(0.0) == 0.5


def test_propagate_zero_mean_start():
    layers = propagate_theory([64] * 11, 0.0, 1.0)
    assert len(layers) == 10
    assert layers[0].alpha == 0.0
    assert layers[1].alpha == pytest.approx(0.6833316961214809, rel=1e-12)
    alphas = [s.alpha for s in layers]
    assert all(x < y for x, y in zip(alphas[1:], alphas[2:]))


def test_propagate_hand_iteration():
    # two steps with the quadrature moments: (2,1) then the scaled next input
    layers = propagate_theory([64, 64, 64], 2.0, 1.0)
    mean, var = QUADRATURE[2, 1]
    assert layers[0].mu == pytest.approx(mean, rel=1e-12)
    assert layers[0].sigma == pytest.approx(np.sqrt(var), rel=1e-9)
    assert layers[1].alpha == pytest.approx(mean / np.sqrt(var), rel=1e-9)
    assert layers[0].active_fraction == pytest.approx(stats.norm.cdf(2.0), rel=1e-14)


def test_propagate_width_ratio():
    layers = propagate_theory([100, 25], 1.0, 1.0)
    assert layers[0].alpha == pytest.approx(2.0)


def test_propagate_saturated():
    for s in propagate_theory([64] * 20, 50.0, 1.0):
        assert s.active_fraction >= 1 - 1e-15
        assert 1 - 1e-6 <= s.variance_ratio <= 1


def test_propagate_warns_on_growing_widths():
    with pytest.warns(NonMonotoneWidths):
        layers = propagate_theory([16, 32], 1.0, 1.0)
    assert len(layers) == 1


def test_propagate_nondecreasing_property():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        layers = propagate_theory([256, 128, 128, 64, 32, 32, 16], 0.3, 2.0)
    alphas = [s.alpha for s in layers]
    assert all(x <= y for x, y in zip(alphas, alphas[1:]))
    assert all(0 <= s.active_fraction <= 1 for s in layers)


def test_input_distribution_parse():
    assert InputDistribution.parse("chisq3") == InputDistribution.chisq(3)
    d = InputDistribution.parse("normal:3,2")
    assert (d.mean, d.std) == (3.0, 2.0)
    assert InputDistribution.parse("uniform:0,1").std == pytest.approx(np.sqrt(1 / 12))
    assert InputDistribution.chisq(3).mean == 3 and InputDistribution.chisq(3).std ** 2 == pytest.approx(6)
    with pytest.raises(UnsupportedDistribution):
        InputDistribution.parse("cauchy")
    with pytest.raises(UnsupportedDistribution):
        InputDistribution("cauchy").mean


def test_transport_gaussian():
    w = generate_alg2(100, 100, make_rng(0)).w
    r = empirical_transport(w, InputDistribution.normal(3, 2), 100_000, make_rng(2))
    assert r.predicted_mean == 3.0 and r.predicted_variance == 4.0
    assert max(r.mean_z, r.diag_z, r.offdiag_z) < 5.0


def test_transport_width_factor():
    w = generate_alg2(16, 64, make_rng(0)).w
    r = empirical_transport(w, InputDistribution.normal(1.5, 1), 10_000, make_rng(1))
    assert r.predicted_mean == pytest.approx(3.0)
    assert r.mean_z < 5


def test_transport_deviation_scaling():
    w = generate_alg2(8, 8, make_rng(0)).w
    d = InputDistribution.chisq(3)
    small = np.mean([empirical_transport(w, d, 10_000, make_rng(s)).max_mean_deviation
                     for s in range(10)])
    large = np.mean([empirical_transport(w, d, 1_000_000, make_rng(s)).max_mean_deviation
                     for s in range(10)])
    # 100x the trials should shrink deviations about tenfold
    assert 4 < small / large < 25


def test_transport_needs_trials():
    with pytest.raises(ValueError):
        empirical_transport(np.eye(2), InputDistribution.normal(), 100, make_rng(0))


@pytest.mark.parametrize("n", [10, 500])
def test_ks_statistic_matches_scipy(n):
    x = make_rng(n).standard_normal(n) * 1.1 + 0.05
    assert ks_statistic(x) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)


def test_clt_gaussian_inputs_in_null_band():
    # 99% quantile of the exact KS null law at 10^5 samples
    crit = 0.005145321961471824
    ks = clt_distance(10, 10, InputDistribution.normal(2, 3), 100_000, make_rng(3))
    assert ks < crit


def test_clt_needs_trials():
    with pytest.raises(ValueError):
        clt_distance(5, 5, InputDistribution.chisq(3), 1000, make_rng(0))


def test_dead_fraction_all_positive():
    widths = [5, 4, 3, 2]
    ws = [np.abs(make_rng(i).standard_normal((widths[i + 1], widths[i]))) for i in range(3)]
    net = Mlp(widths, ws, [np.zeros(w) for w in widths[1:]])
    x = np.abs(make_rng(9).standard_normal((50, 5))) + 0.1
    np.testing.assert_array_equal(dead_unit_fraction(net, x), [0.0, 0.0])


def test_dead_fraction_random_init_deep():
    x = make_rng(1).standard_normal((256, 64))
    deep = {}
    for kind in ("random", "proposed_alg2"):
        runs = []
        for seed in range(5):
            dead = dead_unit_fraction(build_mlp(mlp_widths(64, 64, 50, 10),
                                                InitializerSpec(kind, seed=seed)), x)
            assert len(dead) == 50 and np.all((dead >= 0) & (dead <= 1))
            runs.append(dead[-10:].mean())
        deep[kind] = np.mean(runs)
    # symmetric pre-activations leave about half the units off
    assert 0.45 <= deep["random"] <= 0.55
    assert deep["proposed_alg2"] < 0.05


def test_dead_fraction_modes():
    from stiefel_relu.nn import ActivationKind

    net = build_mlp([4, 8, 2], InitializerSpec("he", seed=0), ActivationKind("leaky_relu"))
    x = make_rng(0).standard_normal((100, 4))
    neg = dead_unit_fraction(net, x)
    assert 0 < neg[0] < 1
    assert dead_unit_fraction(net, x, mode="zero")[0] == 0.0


def test_sampled_propagation_matches_theory():
    widths = [64] * 21
    theory = propagate_theory(widths, 2.0, 1.0)
    emp = sampled_propagation(widths, InputDistribution.normal(2, 1), 20_000, seed=0)
    for t, e in zip(theory, emp):
        assert abs(e.dead_fraction - (1 - t.active_fraction)) < 0.02
        assert e.post_mean == pytest.approx(t.mu, rel=0.05)


def test_dead_fraction_mnist_standardized(mnist_test):
    # constant border pixels are dropped
    with pytest.warns(DegenerateFeature):
        ds = standardize_shift(mnist_test.subset(np.arange(2000)), ShiftSpec(2.0))
    widths = mlp_widths(ds.n_features, 64, 50, 10)
    theory = propagate_theory(widths[:-1], 2.0, 1.0)
    net = build_mlp(widths, InitializerSpec("proposed_alg2", seed=0))
    dead = dead_unit_fraction(net, ds.features)
    bound = np.array([1 - s.active_fraction for s in theory]) + 0.05
    assert np.all(dead <= bound)


@pytest.mark.slow
def test_dead_fraction_proposed_below_he():
    x = make_rng(5).normal(2.0, 1.0, size=(512, 64))
    prop, he = [], []
    for seed in range(10):
        prop.append(dead_unit_fraction(build_mlp(mlp_widths(64, 64, 50, 10),
                                                 InitializerSpec("proposed_alg2", seed=seed)), x))
        he.append(dead_unit_fraction(build_mlp(mlp_widths(64, 64, 50, 10),
                                               InitializerSpec("he", seed=seed)), x))
    prop, he = np.mean(prop, axis=0), np.mean(he, axis=0)
    assert np.all(prop[19:] < he[19:])
